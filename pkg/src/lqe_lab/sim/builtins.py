"""Generators for the shipped scenario JSON files.

``python -m lqe_lab.sim.builtins DIR`` rewrites them; a test checks that
the shipped files match these functions.
"""
from __future__ import annotations

import json
import math
import sys
from pathlib import Path

from .scenario import BUILTIN_NAMES, snr_at_distance

COMPARE = [
    {"name": "proposed", "rate_algo": "profile", "route_metric": "r"},
    {"name": "samplerate", "rate_algo": "samplerate", "route_metric": "etx"},
]
SEEDS = list(range(1, 11))


def _points(fn, duration: int, step: int = 1) -> list[list[float]]:
    return [[float(t), round(fn(t), 2)] for t in range(0, duration + 1, step)]


def t1_sweep() -> dict:
    """Two nodes, one walking out and back; estimator probes enabled."""
    return {
        "name": "t1-sweep",
        "description": "mobile two-node link, SNR swept 50 -> 5 -> 50 dB, 20% load",
        "duration_s": 300,
        "seeds": SEEDS,
        "nodes": ["S", "D"],
        "links": [{"a": "S", "b": "D",
                   "snr": {"model": "sweep", "min_db": 5, "max_db": 50, "sigma_db": 2.0}}],
        "traffic": [{"src": "S", "dst": "D", "load": 0.2}],
        "lqe": {"broadcast_probes": True, "trace": "flows"},
        "variants": COMPARE,
    }


def t2_steps() -> dict:
    """Stop-and-go walk: SNR held on plateaus with short transitions."""
    levels = [45, 38, 31, 24, 17, 10]
    pts, t = [], 0.0
    for lvl in levels:
        pts += [[t, float(lvl)], [t + 55.0, float(lvl)]]
        t += 60.0
    return {
        "name": "t2-steps",
        "description": "stepwise SNR plateaus, saturated flow",
        "duration_s": 360,
        "seeds": SEEDS[:5],
        "nodes": ["S", "D"],
        "links": [{"a": "S", "b": "D", "snr": {"model": "trajectory", "points": pts, "sigma_db": 1.0}}],
        "traffic": [{"src": "S", "dst": "D", "load": 1.0}],
        "lqe": {"trace": "flows"},
        "variants": COMPARE,
    }


def t6_transfer() -> dict:
    """Profiles bootstrapped in a cleaner environment than the one they are used in."""
    doc = t1_sweep()
    doc.update({
        "name": "t6-transfer",
        "description": "profile bootstrapped 4 dB better than the run environment",
        "seeds": SEEDS[:5],
        "traffic": [{"src": "S", "dst": "D", "load": 0.5}],
        "lqe": {"trace": "flows"},
        "variants": [
            {"name": "updating", "rate_algo": "profile", "route_metric": "r", "alpha_s": 0.1},
            {"name": "static", "rate_algo": "profile", "route_metric": "r", "alpha_s": 0.0},
            {"name": "samplerate", "rate_algo": "samplerate", "route_metric": "etx"},
        ],
    })
    doc["links"] = [dict(doc["links"][0], phy_offset_db=-4.0)]
    return doc


def _geometry_links(pos: dict[str, tuple[float, float]], exponent: float, sigma: float,
                    walls: dict[frozenset, float] | None = None) -> list[dict]:
    names = list(pos)
    links = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            d = math.dist(pos[a], pos[b])
            extra = (walls or {}).get(frozenset((a, b)), 0.0)
            mean = snr_at_distance(d, exponent=exponent, extra_loss_db=extra)
            links.append({"a": a, "b": b, "snr": {"model": "gaussian", "mean_db": round(mean, 2),
                                                 "sigma_db": sigma}})
    return links


def r1_line5() -> dict:
    """Destination and three relays on a line; the source walks past them and back."""
    duration = 120
    relays = {"D": (0.0, 0.0), "A": (12.0, 0.0), "B": (24.0, 0.0), "C": (36.0, 0.0)}

    def src_x(t: float) -> float:
        half = duration / 2
        frac = t / half if t <= half else (duration - t) / half
        return 2.0 + 42.0 * frac

    links = _geometry_links(relays, 3.5, 1.0)
    for name, (x, y) in relays.items():
        traj = _points(lambda t: snr_at_distance(math.dist((src_x(t), 3.0), (x, y))), duration)
        links.append({"a": "S", "b": name, "snr": {"model": "trajectory", "points": traj, "sigma_db": 1.0}})
    return {
        "name": "r1-line5",
        "description": "five nodes on a line, source moves away from the destination and back",
        "duration_s": duration,
        "seeds": SEEDS[:5],
        "nodes": ["S", "D", "A", "B", "C"],
        "links": links,
        "traffic": [{"src": "S", "dst": "D", "load": 1.0}],
        "lqe": {"trace": "none"},
        "variants": COMPARE,
    }


def _star(name: str, exponent: float, walls: dict[frozenset, float], description: str) -> dict:
    pos = {"S": (0.0, 0.0)}
    for i, (r, ang) in enumerate([(8, 0), (14, 40), (20, 80), (26, 120)], start=1):
        a = math.radians(ang)
        pos[f"R{i}"] = (round(r * math.cos(a), 3), round(r * math.sin(a), 3))
    slot = 60
    return {
        "name": name,
        "description": description,
        "duration_s": 4 * slot,
        "seeds": SEEDS[:5],
        "nodes": list(pos),
        "links": _geometry_links(pos, exponent, 1.0, walls),
        "traffic": [{"src": "S", "dst": f"R{i}", "load": 1.0, "start_s": (i - 1) * slot, "stop_s": i * slot}
                    for i in range(1, 5)],
        "lqe": {"trace": "none"},
        "variants": COMPARE,
    }


def r2_star() -> dict:
    return _star("r2-star", 3.0, {}, "line-of-sight star, one receiver at a time")


def r3_nlos() -> dict:
    walls = {frozenset(("S", "R3")): 6.0, frozenset(("S", "R4")): 6.0}
    return _star("r3-nlos", 3.8, walls, "non-line-of-sight star with two walled receivers")


GENERATORS = {
    "t1-sweep": t1_sweep,
    "t2-steps": t2_steps,
    "t6-transfer": t6_transfer,
    "r1-line5": r1_line5,
    "r2-star": r2_star,
    "r3-nlos": r3_nlos,
}
assert tuple(GENERATORS) == BUILTIN_NAMES


def render(name: str) -> str:
    return json.dumps(GENERATORS[name](), indent=2) + "\n"


def write_all(directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in GENERATORS:
        (directory / f"{name}.json").write_text(render(name))


if __name__ == "__main__":
    write_all(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "builtin")
