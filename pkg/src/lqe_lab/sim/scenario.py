"""Scenario documents: loading, validation, defaults and SNR trajectories."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .. import phy

BUILTIN_NAMES = ("t1-sweep", "t2-steps", "t6-transfer", "r1-line5", "r2-star", "r3-nlos")


class ScenarioError(ValueError):
    """Schema or consistency violation; ``pointer`` is a JSON pointer."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"


DEFAULTS: dict[str, Any] = {
    "description": "",
    "seeds": [1],
    "packet_size": 1500,
    "noise_floor_dbm": phy.DEFAULT_NOISE_FLOOR_DBM,
    "beacon_interval_s": 1,
    "tc": {"interval_s": 1, "loss_prob": 0.0, "expiry": 3},
    "lqe": {"alpha_p": 0.2, "window": 10, "broadcast_probes": False,
            "benchmark_packets": 10, "trace": "flows"},
    "profile": {"alpha_s": 0.1, "bootstrap_s": 3600, "bootstrap_mode": "link",
                "sweep_min_db": -5, "sweep_max_db": 60, "packets_per_second": 10,
                "phy_offset_db": 0.0},
    "rate": {"alpha_r": 0.1, "probe_fraction": 0.1},
    "mac": {"sifs_us": 10.0, "difs_us": 50.0, "slot_us": 20.0, "cw_min": 31,
            "cw_max": 1023, "max_retries": 11},
    "variants": [{"name": "proposed", "rate_algo": "profile", "route_metric": "r"}],
}

LINK_DEFAULTS = {"phy_offset_db": 0.0}
FLOW_DEFAULTS = {"start_s": 0, "stop_s": None}


def schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("scenario.schema.json").read_text())


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(doc: dict) -> dict:
    """Validate a scenario document and fill in every default."""
    validator = jsonschema.Draft7Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ScenarioError(e.message, _pointer(e.absolute_path))
    out = _merge(DEFAULTS, doc)
    out["links"] = [_merge(LINK_DEFAULTS, link) for link in out["links"]]
    out["traffic"] = [_merge(FLOW_DEFAULTS, f) for f in out.get("traffic", [])]
    _check(out)
    return out


def _check(doc: dict) -> None:
    nodes = doc["nodes"]
    if len(set(nodes)) != len(nodes):
        raise ScenarioError("duplicate node ids", "/nodes")
    known = set(nodes)
    seen = set()
    for i, link in enumerate(doc["links"]):
        a, b = link["a"], link["b"]
        for end in ("a", "b"):
            if link[end] not in known:
                raise ScenarioError(f"unknown node {link[end]!r}", f"/links/{i}/{end}")
        if a == b:
            raise ScenarioError("self link", f"/links/{i}")
        key = frozenset((a, b))
        if key in seen:
            raise ScenarioError("duplicate link", f"/links/{i}")
        seen.add(key)
        snr = link["snr"]
        if snr["model"] == "trajectory":
            ts = [p[0] for p in snr["points"]]
            if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
                raise ScenarioError("trajectory times must be strictly increasing", f"/links/{i}/snr/points")
        if snr["model"] == "sweep" and snr["min_db"] >= snr["max_db"]:
            raise ScenarioError("min_db must be below max_db", f"/links/{i}/snr")
    for i, flow in enumerate(doc["traffic"]):
        for end in ("src", "dst"):
            if flow[end] not in known:
                raise ScenarioError(f"unknown node {flow[end]!r}", f"/traffic/{i}/{end}")
        if flow["src"] == flow["dst"]:
            raise ScenarioError("flow source equals destination", f"/traffic/{i}")
        if flow["stop_s"] is not None and flow["stop_s"] <= flow["start_s"]:
            raise ScenarioError("stop_s must exceed start_s", f"/traffic/{i}")
    names = [v["name"] for v in doc["variants"]]
    if len(set(names)) != len(names):
        raise ScenarioError("duplicate variant names", "/variants")
    for i, v in enumerate(doc["variants"]):
        algo = v.get("rate_algo", "profile")
        if algo.startswith("fixed:"):
            try:
                phy.check_rate(int(algo.split(":", 1)[1]))
            except ValueError:
                raise ScenarioError(f"bad fixed rate {algo!r}", f"/variants/{i}/rate_algo") from None


def load(source: str | Path | dict) -> dict:
    """Resolve a built-in name, a JSON file path or an already-parsed dict."""
    if isinstance(source, dict):
        return resolve(source)
    name = str(source)
    if name in BUILTIN_NAMES:
        text = resources.files(__package__).joinpath("builtin", f"{name}.json").read_text()
    else:
        try:
            text = Path(name).read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} (line {exc.lineno})") from None
    return resolve(doc)


def builtin_document(name: str) -> dict:
    text = resources.files(__package__).joinpath("builtin", f"{name}.json").read_text()
    return json.loads(text)


@dataclass
class Trajectory:
    """Piecewise-linear mean SNR over time, clamped outside its points."""
    times: list[float]
    values: list[float]
    periodic: bool = False

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("need matching, non-empty time and value lists")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def span(self) -> float:
        return self.times[-1] - self.times[0]

    def __call__(self, t: float) -> float:
        ts, vs = self.times, self.values
        if self.periodic and self.span > 0:
            t = ts[0] + (t - ts[0]) % self.span
        if t <= ts[0]:
            return vs[0]
        if t >= ts[-1]:
            return vs[-1]
        lo, hi = 0, len(ts) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ts[mid] <= t:
                lo = mid
            else:
                hi = mid
        return vs[lo] + (vs[hi] - vs[lo]) * (t - ts[lo]) / (ts[hi] - ts[lo])

    def integral(self) -> float:
        """Exact integral of the piecewise-linear mean over its support."""
        return sum((t1 - t0) * (v0 + v1) / 2.0 for t0, t1, v0, v1 in
                   zip(self.times, self.times[1:], self.values, self.values[1:]))


def mobility_sweep(min_snr: float, max_snr: float, duration: float, periodic: bool = True) -> Trajectory:
    """Out-and-back walk: max SNR at both ends, min SNR halfway."""
    if not min_snr < max_snr:
        raise ValueError("min_snr must be below max_snr")
    if duration <= 0:
        raise ValueError("duration must be positive")
    return Trajectory([0.0, duration / 2.0, float(duration)], [max_snr, min_snr, max_snr], periodic)


@dataclass
class SnrModel:
    mean: Trajectory
    sigma: float = 0.0

    @classmethod
    def from_doc(cls, doc: dict, default_period: float) -> "SnrModel":
        kind = doc["model"]
        sigma = float(doc.get("sigma_db", 0.0))
        if kind == "constant":
            return cls(Trajectory([0.0], [float(doc["mean_db"])]), 0.0)
        if kind == "gaussian":
            return cls(Trajectory([0.0], [float(doc["mean_db"])]), sigma)
        if kind == "sweep":
            period = float(doc.get("period_s") or default_period)
            return cls(mobility_sweep(doc["min_db"], doc["max_db"], period), sigma)
        if kind == "trajectory":
            pts = doc["points"]
            return cls(Trajectory([float(p[0]) for p in pts], [float(p[1]) for p in pts],
                                  bool(doc.get("periodic", False))), sigma)
        raise ValueError(f"unknown snr model {kind!r}")


def snr_at_distance(distance_m: float, snr_ref_db: float = 60.0, exponent: float = 3.5,
                    extra_loss_db: float = 0.0) -> float:
    """Log-distance path loss relative to 1 m."""
    return snr_ref_db - 10.0 * exponent * math.log10(max(distance_m, 1.0)) - extra_loss_db


def tandem(n: int, spacing_m: float = 10.0, sigma_db: float = 1.0, **pathloss) -> tuple[list[str], list[dict]]:
    """Line of ``n`` nodes ``n0 .. n{n-1}``; every pair gets a Gaussian link."""
    if n < 2:
        raise ValueError("need at least two nodes")
    nodes = [f"n{i}" for i in range(n)]
    links = []
    for i in range(n):
        for j in range(i + 1, n):
            mean = snr_at_distance((j - i) * spacing_m, **pathloss)
            links.append({"a": nodes[i], "b": nodes[j],
                          "snr": {"model": "gaussian", "mean_db": round(mean, 3), "sigma_db": sigma_db}})
    return nodes, links


@dataclass
class Variant:
    name: str
    rate_algo: str = "profile"
    route_metric: str = "r"
    estimator: str | None = None
    alpha_s: float | None = None

    @classmethod
    def from_doc(cls, doc: dict) -> "Variant":
        return cls(doc["name"], doc.get("rate_algo", "profile"), doc.get("route_metric", "r"),
                   doc.get("estimator"), doc.get("alpha_s"))

    @property
    def link_estimator(self) -> str:
        if self.estimator:
            return self.estimator
        if self.rate_algo == "profile":
            return "snr_profile"
        if self.rate_algo == "samplerate":
            return "samplerate"
        return "beacon"


@dataclass
class Flow:
    src: str
    dst: str
    load: float
    start_s: float = 0.0
    stop_s: float | None = None
    packet_size: int = 1500
    extra: dict = field(default_factory=dict)
