"""``lqe-lab`` command line: analyze, bootstrap, simulate, delta."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import analytic, phy
from .lqe import Method, accuracy_mae
from .profile import ProfileFormatError, save, to_csv
from .sim import engine
from .sim import scenario as sc

log = logging.getLogger("lqe_lab")

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_RUNTIME = 0, 2, 3, 4

SUMMARY_HEADER = ("scenario", "variant", "seed", "flow", "src", "dst", "load", "sent_packets",
                  "delivered_packets", "delivered_bytes", "throughput_mbps")
TRACE_HEADER = ("variant", "seed", "t", "link", "rate_mbps", "method", "pdr_estimate")
ROUTE_HEADER = ("variant", "seed", "t", "src", "dst", "path", "hops", "metric", "cost")
DECISION_HEADER = ("variant", "seed", "t", "node", "neighbor", "snr_db", "selected_rate", "g_selected_us")
DELTA_HEADER = ("variant", "link", "rate_mbps", "method", "delta", "n")
ANALYZE_HEADER = ("w", "w_d", "method", "tau_us", "eps_t", "delta", "eps_e", "eps_x", "rank")


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    # repr is the shortest text that parses back to the same float
    return repr(x) if isinstance(x, float) else str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _jsonl_text(header, rows) -> str:
    return "".join(json.dumps(dict(zip(header, row))) + "\n" for row in rows)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def write_manifest(out: Path, command: str, config: dict) -> None:
    doc = {"command": command, "config": config, "sha256": config_hash(config)}
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _split_set(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise UsageError(f"--set expects key=value, got {item!r}")
    key, value = item.split("=", 1)
    return key.strip(), value


def apply_overrides(doc: dict, items: list[str]) -> dict:
    """Apply dotted ``key=value`` overrides to a resolved scenario; only
    keys that already exist (list items by index) may be set."""
    doc = json.loads(json.dumps(doc))
    for item in items:
        key, value = _split_set(item)
        parts = key.split(".")
        node = doc
        for i, part in enumerate(parts):
            last = i == len(parts) - 1
            if isinstance(node, list):
                if not part.isdigit() or int(part) >= len(node):
                    raise UsageError(f"unknown key {key!r}")
                part = int(part)
            elif not isinstance(node, dict) or part not in node:
                raise UsageError(f"unknown key {key!r}")
            if last:
                node[part] = _parse_value(value)
            else:
                node = node[part]
    return doc


def parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad seed list {text!r}") from None
    if not seeds or min(seeds) < 0:
        raise UsageError("seed list must hold non-negative integers")
    return seeds


# -- analyze ------------------------------------------------------------------

def analyze_rows(params: analytic.LqeModelParams, sets) -> list[tuple]:
    rows = []
    for w, w_d in sets:
        p = dataclasses.replace(params, probes=w, data_packets=w_d)
        for r in analytic.evaluate(p):
            rows.append((w, w_d, r.method.value, r.tau_us, r.eps_t, r.delta, r.eps_e, r.eps, r.rank))
    return rows


def _analytic_overrides(items: list[str]) -> dict:
    names = analytic.LqeModelParams.field_names()
    out = {}
    for item in items:
        key, value = _split_set(item)
        if key not in names:
            raise UsageError(f"unknown key {key!r}")
        if key == "rates":
            try:
                out[key] = tuple(phy.rate_index_of(float(x)) for x in value.split(","))
            except ValueError as exc:
                raise UsageError(f"bad value for rates: {exc}") from None
            continue
        v = _parse_value(value)
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise UsageError(f"{key} expects a number")
        out[key] = v
    return out


def cmd_analyze(args) -> int:
    over = _analytic_overrides(args.set or [])
    try:
        params = analytic.LqeModelParams(**over)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    if args.w is not None or args.w_d is not None:
        sets = [(args.w or params.probes, args.w_d or params.data_packets)]
    else:
        sets = list(analytic.FIG1_SETS)
    text = _csv_text(ANALYZE_HEADER, analyze_rows(params, sets))
    if args.out:
        out = _out_dir(args.out)
        (out / "analyze.csv").write_text(text)
        cfg = dataclasses.asdict(params)
        cfg["rates"] = list(cfg["rates"])
        write_manifest(out, "analyze", {"params": cfg, "sets": [list(s) for s in sets]})
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- bootstrap ----------------------------------------------------------------

def cmd_bootstrap(args) -> int:
    doc = sc.load(args.scenario)
    doc = sc.resolve(apply_overrides(doc, args.set or []))
    if not doc["links"]:
        raise UsageError("scenario has no links")
    seed = parse_seeds(args.seed)[0] if args.seed else doc["seeds"][0]
    duration = args.duration if args.duration is not None else doc["profile"]["bootstrap_s"]
    if duration < 0:
        raise UsageError("--duration must be >= 0")
    out = _out_dir(args.out)
    profiles = engine.build_profiles(doc, seed, duration)
    for (u, v), prof in sorted(profiles.items()):
        stem = out / f"{u}_{v}"
        try:
            save(prof, stem.with_suffix(".snrp"))
            stem.with_suffix(".csv").write_text(to_csv(prof))
        except OSError as exc:
            raise OSError(f"cannot write profile {stem}: {exc}") from exc
    write_manifest(out, "bootstrap", {"scenario": doc, "seed": seed, "duration_s": duration})
    return EXIT_OK


# -- simulate -----------------------------------------------------------------

def _run_seed(doc: dict, seed: int, variants: list[str], keep_events: bool):
    profiles = engine.build_profiles(doc, seed)
    return [engine.run(doc, name, seed, profiles, keep_events) for name in variants]


def summary_rows(results) -> list[tuple]:
    rows = []
    per_variant = defaultdict(list)
    for r in results:
        for f in r.flows:
            rows.append((r.scenario, r.variant, r.seed, f.index, f.src, f.dst, float(f.load), f.sent_packets,
                         f.delivered_packets, f.delivered_bytes, f.throughput_mbps))
        per_variant[r.variant].append(r)
    for variant, rs in per_variant.items():
        n = len(rs)
        rows.append((rs[0].scenario, variant, "mean", "all", "", "", "",
                     sum(sum(f.sent_packets for f in r.flows) for r in rs) / n,
                     sum(sum(f.delivered_packets for f in r.flows) for r in rs) / n,
                     sum(sum(f.delivered_bytes for f in r.flows) for r in rs) / n,
                     sum(r.mean_throughput_mbps for r in rs) / n))
    return rows


def delta_rows(traces: list[tuple]) -> list[tuple]:
    """``traces`` rows follow TRACE_HEADER; seeds are pooled per variant."""
    bench = {}
    series = defaultdict(dict)
    for variant, seed, t, link, rate, method, pdr in traces:
        key = (variant, link, float(rate))
        series[key + (method,)][(seed, t)] = float(pdr)
        if method == Method.DATA.value:
            bench.setdefault(key, {})[(seed, t)] = float(pdr)
    if not traces:
        raise ValueError("empty trace")
    if not bench:
        raise ValueError("trace has no data-packet benchmark column")
    rows = []
    for (variant, link, rate, method), s in sorted(series.items()):
        b = bench.get((variant, link, rate))
        if not b:
            continue
        ts = sorted(set(s) & set(b))
        if ts:
            rows.append((variant, link, rate, method, accuracy_mae([s[t] for t in ts], [b[t] for t in ts]), len(ts)))
    return rows


def cmd_simulate(args) -> int:
    doc = sc.load(args.scenario)
    doc = sc.resolve(apply_overrides(doc, args.set or []))
    seeds = parse_seeds(args.seeds) if args.seeds else list(doc["seeds"])
    doc["seeds"] = seeds
    names = [v["name"] for v in doc["variants"]]
    if args.variants:
        wanted = [v for v in args.variants.split(",") if v]
        unknown = [v for v in wanted if v not in names]
        if unknown:
            raise UsageError(f"unknown variant(s): {', '.join(unknown)}")
        names = wanted
    out = _out_dir(args.out)
    log.info("simulating %s: %d seed(s), variants %s", doc["name"], len(seeds), names)
    if args.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            batches = list(pool.map(_run_seed, [doc] * len(seeds), seeds, [names] * len(seeds),
                                    [args.events] * len(seeds)))
    else:
        batches = [_run_seed(doc, s, names, args.events) for s in seeds]
    results = [r for batch in batches for r in batch]

    (out / "summary.csv").write_text(_csv_text(SUMMARY_HEADER, summary_rows(results)))
    traces = [(r.variant, r.seed, *row) for r in results for row in r.traces]
    routes = [(r.variant, r.seed, *row) for r in results for row in r.routes]
    decisions = [(r.variant, r.seed, *row) for r in results for row in r.decisions]
    write = _jsonl_text if args.format == "jsonl" else _csv_text
    ext = args.format
    (out / f"traces.{ext}").write_text(write(TRACE_HEADER, traces))
    (out / f"routes.{ext}").write_text(write(ROUTE_HEADER, routes))
    (out / f"decisions.{ext}").write_text(write(DECISION_HEADER, decisions))
    if traces:
        (out / "delta.csv").write_text(_csv_text(DELTA_HEADER, delta_rows(traces)))
    if args.events:
        for r in results:
            path = out / f"events_{r.variant}_{r.seed}.jsonl"
            with path.open("w") as fh:
                for rec in r.events.records():
                    fh.write(json.dumps(rec) + "\n")
    write_manifest(out, "simulate", {"scenario": doc, "variants": names})
    for r in results:
        log.info("%s seed %d: %.3f Mbps", r.variant, r.seed, r.mean_throughput_mbps)
    return EXIT_OK


# -- delta --------------------------------------------------------------------

def read_traces(path: Path) -> list[tuple]:
    text = path.read_text()
    if path.suffix == ".jsonl":
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
    else:
        records = list(csv.DictReader(io.StringIO(text)))
    rows = []
    for i, rec in enumerate(records):
        try:
            rows.append(tuple(rec[k] for k in TRACE_HEADER))
        except KeyError as exc:
            raise sc.ScenarioError(f"{path}: record {i} lacks column {exc}") from None
    return rows


def cmd_delta(args) -> int:
    traces = []
    for p in args.traces:
        traces += read_traces(Path(p))
    text = _csv_text(DELTA_HEADER, delta_rows(traces))
    if args.out:
        out = _out_dir(args.out)
        (out / "delta.csv").write_text(text)
        write_manifest(out, "delta", {"traces": [str(p) for p in args.traces]})
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lqe-lab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="closed-form comparison of the LQE methods")
    a.add_argument("--w", type=int, help="probes per estimation interval")
    a.add_argument("--w-d", type=int, help="data packets per interval")
    a.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a model parameter")
    a.add_argument("--out", help="output directory (default: CSV on stdout)")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bootstrap", help="bootstrap SNR profiles for every link of a scenario")
    b.add_argument("--scenario", required=True, help="built-in name or JSON path")
    b.add_argument("--duration", type=int, help="bootstrap seconds (default from scenario)")
    b.add_argument("--seed", help="seed (default: first scenario seed)")
    b.add_argument("--set", action="append", metavar="KEY=VALUE")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bootstrap)

    s = sub.add_parser("simulate", help="run a scenario for every variant and seed")
    s.add_argument("--scenario", required=True, help="built-in name or JSON path")
    s.add_argument("--seeds", help="comma-separated seed list (default from scenario)")
    s.add_argument("--variants", help="comma-separated subset of variant names")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted scenario override")
    s.add_argument("--format", choices=("csv", "jsonl"), default="csv", help="trace/route output format")
    s.add_argument("--jobs", type=int, default=1, help="worker processes across seeds")
    s.add_argument("--events", action="store_true", help="also write the event logs as NDJSON")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("delta", help="per-rate accuracy table from trace files")
    d.add_argument("traces", nargs="+")
    d.add_argument("--out")
    d.set_defaults(func=cmd_delta)
    return ap


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("LQE_LAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (sc.ScenarioError, ProfileFormatError, json.JSONDecodeError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
