"""Discrete-event run loop.

One control event per simulated second does, in order: fold the previous
second's data outcomes into the SNR profiles, redraw every link's SNR, send
beacons (and LQE probes when enabled), record the estimator traces, take
rate decisions, flood TC adverts and recompute source routes. Data packets
are then sent back to back for the flow's duty-cycled share of the second.
All transmissions share one medium, so airtime intervals never overlap.
"""
from __future__ import annotations

import heapq
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .. import phy
from ..lqe import BeaconWindow, EwmaState, Method, accuracy_mae, beacon_estimate, ewma_update
from ..profile import SnrProfile, bootstrap_link, lookup_pdr, online_update, quantize
from ..rate import (RateDecision, SampleRateState, probe_rate, samplerate_pick, samplerate_select,
                    samplerate_update, select_rate)
from ..routing import LinkAdvert, LinkStateDb, NeighborState, Route, shortest_path
from . import scenario as sc
from .mac import MacTiming, broadcast_time, transmit_unicast

# independent RNG streams per seed
_CHANNEL, _BEACON, _PROBE, _BENCH, _MAC, _RATE, _TC, _BOOT = range(8)

TRACE_METHODS = (Method.DATA, Method.BEACON, Method.BROADCAST_EWMA, Method.SNR_PROFILE)

EVENT_FIELDS = {
    "snr": ("t_us", "link", "snr_db"),
    "beacon": ("t_us", "node", "received_by"),
    "probe": ("t_us", "node", "rate_mbps", "received_by"),
    "tx": ("t_us", "end_us", "id", "flow", "src", "dst", "rate_mbps", "bytes", "attempts", "delivered"),
    "ack": ("t_us", "id"),
    "decision": ("t_us", "node", "neighbor", "snr_db", "rate_mbps", "g_us"),
    "route": ("t_us", "flow", "path", "cost"),
    "no_route": ("t_us", "flow"),
    "deliver": ("t_us", "flow", "bytes"),
    "neighbor_lost": ("t_us", "node", "neighbor"),
}


def stream_rng(seed: int, stream: int, index: int = 0) -> random.Random:
    state = np.random.SeedSequence(entropy=seed, spawn_key=(stream, index)).generate_state(2)
    return random.Random(int(state[0]) << 32 | int(state[1]))


def stream_np(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream, index)))


class EventLog(list):
    """Time-ordered tuples ``(kind, *fields)``; see ``EVENT_FIELDS``."""

    def add(self, kind: str, *values) -> None:
        self.append((kind, *values))

    def records(self):
        for ev in self:
            yield {"kind": ev[0], **dict(zip(EVENT_FIELDS[ev[0]], ev[1:]))}

    def count(self, kind: str) -> int:  # type: ignore[override]
        return sum(1 for ev in self if ev[0] == kind)


@dataclass
class _Link:
    a: str
    b: str
    model: sc.SnrModel
    offset: float
    rng: random.Random
    size: int
    snr: int = 0
    p_data: list[float] = field(default_factory=list)
    p_beacon: float = 0.0

    def update(self, t: float) -> None:
        mean = self.model.mean(t)
        x = self.rng.gauss(mean, self.model.sigma) if self.model.sigma > 0 else mean
        self.snr = quantize(x)
        eff = self.snr + self.offset
        self.p_data = [phy.packet_success_prob(k, eff, self.size) for k in range(1, phy.N_RATES + 1)]
        self.p_beacon = phy.packet_success_prob(phy.BEACON_RATE, eff, phy.BEACON_BYTES)


@dataclass
class _Peer:
    """What one node keeps about one potential neighbour."""
    profile: SnrProfile
    samplerate: SampleRateState
    neighbor: NeighborState = field(default_factory=NeighborState)
    window: BeaconWindow = field(default_factory=BeaconWindow)
    ewma: list[EwmaState] = field(default_factory=list)
    snr_seen: float | None = None
    decision: RateDecision | None = None
    batch: dict[tuple[int, int], list[int]] = field(default_factory=lambda: defaultdict(lambda: [0, 0]))


@dataclass
class FlowStats:
    index: int
    src: str
    dst: str
    load: float
    start_s: float
    stop_s: float
    packet_size: int
    sent_packets: int = 0
    sent_bytes: int = 0
    delivered_packets: int = 0
    delivered_bytes: int = 0
    route: Route | None = None
    active_until: float = -1.0

    @property
    def active_s(self) -> float:
        return self.stop_s - self.start_s

    @property
    def throughput_mbps(self) -> float:
        return 8.0 * self.delivered_bytes / (self.active_s * 1e6) if self.active_s > 0 else 0.0


@dataclass
class RunResult:
    scenario: str
    variant: str
    seed: int
    duration_s: int
    flows: list[FlowStats]
    events: EventLog
    traces: list[tuple]           # (t, link, rate_mbps, method, pdr)
    routes: list[tuple]           # (t, src, dst, path, hops, metric, cost)
    decisions: list[tuple]        # (t, node, neighbor, snr_db, selected_mbps, probed_mbps, g_us)
    profiles: dict[tuple[str, str], SnrProfile] = field(default_factory=dict)

    @property
    def mean_throughput_mbps(self) -> float:
        return sum(f.throughput_mbps for f in self.flows) / len(self.flows) if self.flows else 0.0

    def delta(self) -> dict[tuple[str, float, str], tuple[float, int]]:
        return delta_table(self.traces)


def delta_table(traces) -> dict[tuple[str, float, str], tuple[float, int]]:
    """Mean absolute error of each method against the data benchmark,
    keyed by ``(link, rate_mbps, method)`` with the sample count."""
    bench: dict[tuple[str, float], dict[Any, float]] = defaultdict(dict)
    series: dict[tuple[str, float, str], dict[Any, float]] = defaultdict(dict)
    for t, link, rate, method, pdr in traces:
        series[(link, rate, method)][t] = pdr
        if method == Method.DATA.value:
            bench[(link, rate)][t] = pdr
    if not bench:
        raise ValueError("traces contain no data-packet benchmark")
    out = {}
    for (link, rate, method), s in sorted(series.items()):
        b = bench.get((link, rate), {})
        ts = sorted(set(s) & set(b))
        if ts:
            out[(link, rate, method)] = (accuracy_mae([s[t] for t in ts], [b[t] for t in ts]), len(ts))
    return out


def build_profiles(doc: dict, seed: int, duration_s: int | None = None) -> dict[tuple[str, str], SnrProfile]:
    """Bootstrap one profile per directed (node, neighbour) pair of every link."""
    cfg = doc["profile"]
    size = doc["packet_size"]
    secs = cfg["bootstrap_s"] if duration_s is None else duration_s
    offset = cfg["phy_offset_db"]
    cache: dict[tuple[int, int], float] = {}

    def success(k: int, b: int) -> float:
        key = (k, b)
        if key not in cache:
            cache[key] = phy.packet_success_prob(k, b + offset, size)
        return cache[key]

    profiles = {}
    for i, link in enumerate(doc["links"]):
        for j, (u, v) in enumerate(((link["a"], link["b"]), (link["b"], link["a"]))):
            prof = SnrProfile(v, size)
            if cfg["bootstrap_mode"] != "none" and secs > 0:
                rng = stream_np(seed, _BOOT, 2 * i + j)
                if cfg["bootstrap_mode"] == "sweep":
                    lo, hi = cfg["sweep_min_db"], cfg["sweep_max_db"]
                    snrs = lo + np.arange(secs) % (hi - lo + 1)
                else:
                    model = sc.SnrModel.from_doc(link["snr"], doc["duration_s"])
                    span = model.mean.span or doc["duration_s"]
                    ts = np.arange(secs) % max(span, 1)
                    means = np.array([model.mean(float(t)) for t in ts])
                    snrs = means + rng.normal(0.0, model.sigma, secs) if model.sigma > 0 else means
                bootstrap_link(prof, snrs.tolist(), success, rng, cfg["packets_per_second"])
            profiles[(u, v)] = prof
    return profiles


class Simulation:
    def __init__(self, doc: dict, variant: sc.Variant, seed: int,
                 profiles: dict[tuple[str, str], SnrProfile] | None = None, keep_events: bool = True):
        self.doc = doc
        self.variant = variant
        self.seed = seed
        self.size = doc["packet_size"]
        self.duration = int(doc["duration_s"])
        self.noise_floor = doc["noise_floor_dbm"]
        m = doc["mac"]
        self.mac = MacTiming(m["sifs_us"], m["difs_us"], m["slot_us"], m["cw_min"], m["cw_max"], m["max_retries"])
        self.alpha_s = variant.alpha_s if variant.alpha_s is not None else doc["profile"]["alpha_s"]
        lqe_cfg = doc["lqe"]
        self.alpha_p = lqe_cfg["alpha_p"]
        self.probes = lqe_cfg["broadcast_probes"]
        self.bench_n = lqe_cfg["benchmark_packets"]
        self.nodes: list[str] = list(doc["nodes"])
        self.links: dict[frozenset, _Link] = {}
        self.adj: dict[str, list[str]] = {n: [] for n in self.nodes}
        for i, link in enumerate(doc["links"]):
            a, b = link["a"], link["b"]
            self.links[frozenset((a, b))] = _Link(
                a, b, sc.SnrModel.from_doc(link["snr"], self.duration), link["phy_offset_db"],
                stream_rng(seed, _CHANNEL, i), self.size)
            self.adj[a].append(b)
            self.adj[b].append(a)
        for n in self.nodes:
            self.adj[n].sort()
        if profiles is None:
            profiles = build_profiles(doc, seed)
        rate_cfg = doc["rate"]
        self.peers: dict[str, dict[str, _Peer]] = {}
        for u in self.nodes:
            self.peers[u] = {}
            for v in self.adj[u]:
                prof = profiles.get((u, v))
                prof = prof.copy() if prof is not None else SnrProfile(v, self.size)
                self.peers[u][v] = _Peer(
                    prof, SampleRateState(rate_cfg["alpha_r"], rate_cfg["probe_fraction"]),
                    window=BeaconWindow(lqe_cfg["window"]),
                    ewma=[EwmaState(0.0, self.alpha_p) for _ in range(phy.N_RATES)])
        tc = doc["tc"]
        self.tc_interval = tc["interval_s"]
        self.tc_loss = tc["loss_prob"]
        self.db = {n: LinkStateDb(tc["expiry"]) for n in self.nodes}
        self.flows = []
        for i, f in enumerate(doc["traffic"]):
            stop = f["stop_s"] if f["stop_s"] is not None else self.duration
            self.flows.append(FlowStats(i, f["src"], f["dst"], f["load"], f["start_s"],
                                        min(stop, self.duration), f.get("packet_size", self.size)))
        self.trace_dirs = self._trace_directions(lqe_cfg["trace"])
        self.rng_beacon = stream_rng(seed, _BEACON)
        self.rng_probe = stream_rng(seed, _PROBE)
        self.rng_bench = stream_rng(seed, _BENCH)
        self.rng_mac = stream_rng(seed, _MAC)
        self.rng_rate = stream_rng(seed, _RATE)
        self.rng_tc = stream_rng(seed, _TC)
        self.keep_events = keep_events
        self.events = EventLog()
        self.traces: list[tuple] = []
        self.routes: list[tuple] = []
        self.decisions: list[tuple] = []
        self.medium_free = 0.0
        self.tx_id = 0
        self._heap: list = []
        self._seq = 0

    # -- plumbing -----------------------------------------------------------

    def _trace_directions(self, mode: str) -> list[tuple[str, str]]:
        if mode == "none":
            return []
        if mode == "all":
            return [(u, v) for u in self.nodes for v in self.adj[u]]
        out = []
        for f in self.flows:
            if frozenset((f.src, f.dst)) in self.links and (f.src, f.dst) not in out:
                out.append((f.src, f.dst))
        return out

    def _log(self, kind: str, *values) -> None:
        if self.keep_events:
            self.events.add(kind, *values)

    def _schedule(self, t: float, prio: int, fn: Callable[[float], None]) -> None:
        heapq.heappush(self._heap, (t, prio, self._seq, fn))
        self._seq += 1

    def _claim(self, t: float, busy_us: float) -> float:
        start = max(t, self.medium_free)
        self.medium_free = start + busy_us
        return start

    def link(self, u: str, v: str) -> _Link:
        return self.links[frozenset((u, v))]

    def run(self) -> RunResult:
        for s in range(self.duration):
            self._schedule(s * 1e6, 0, self._tick)
        while self._heap:
            t, _, _, fn = heapq.heappop(self._heap)
            fn(t)
        self._fold_batches()
        # a packet may overrun into the next second; stable sort keeps
        # causal order for equal times
        self.events.sort(key=lambda ev: ev[1])
        return RunResult(self.doc["name"], self.variant.name, self.seed, self.duration, self.flows,
                         self.events, self.traces, self.routes, self.decisions,
                         {(u, v): p.profile for u in self.nodes for v, p in self.peers[u].items()})

    # -- per-second control -------------------------------------------------

    def _tick(self, t: float) -> None:
        s = int(round(t / 1e6))
        self._fold_batches()
        for key in sorted(self.links, key=lambda k: tuple(sorted(k))):
            link = self.links[key]
            link.update(float(s))
            self._log("snr", t, f"{min(link.a, link.b)}-{max(link.a, link.b)}", link.snr)
        for u in self.nodes:
            self._beacon(u, t)
        if self.probes:
            for u in self.nodes:
                for k in range(1, phy.N_RATES + 1):
                    self._probe(u, k, t)
        for u in self.nodes:
            for v, peer in self.peers[u].items():
                self._decide(u, v, peer, s, t)
        self._trace(s)
        if s % self.tc_interval == 0:
            self._flood_tc()
        for f in self.flows:
            if f.start_s <= s < f.stop_s:
                self._update_route(f, s, t)
                if f.load > 0:
                    f.active_until = t + f.load * 1e6
                    self._schedule(t, 1, lambda now, f=f: self._send(f, now))

    def _fold_batches(self) -> None:
        for u in self.nodes:
            for v, peer in self.peers[u].items():
                if not peer.batch:
                    continue
                if self.alpha_s > 0:
                    for (k, b), (tx, ack) in sorted(peer.batch.items()):
                        online_update(peer.profile, k, b, tx, ack, self.alpha_s)
                peer.batch.clear()

    def _observe(self, peer: _Peer, received: bool, snr: int) -> None:
        if received:
            peer.snr_seen = snr
        elif peer.snr_seen is None:
            # nothing heard yet: the driver reports the noise floor
            peer.snr_seen = phy.DEFAULT_NOISE_FLOOR_DBM - self.noise_floor

    def _beacon(self, u: str, t: float) -> None:
        busy = broadcast_time(phy.BEACON_RATE, phy.BEACON_BYTES, self.rng_mac, self.mac)
        start = self._claim(t, busy)
        heard = []
        for v in self.adj[u]:
            link = self.link(u, v)
            received = self.rng_beacon.random() < link.p_beacon
            peer = self.peers[v][u]
            peer.window.push(received)
            was_alive = peer.neighbor.alive
            alive = peer.neighbor.beacon(received)
            self._observe(peer, received, link.snr)
            if received:
                heard.append(v)
            if was_alive and not alive:
                self._log("neighbor_lost", start, v, u)
        self._log("beacon", start, u, tuple(heard))

    def _probe(self, u: str, k: int, t: float) -> None:
        busy = broadcast_time(k, self.size, self.rng_mac, self.mac)
        start = self._claim(t, busy)
        heard = []
        for v in self.adj[u]:
            received = self.rng_probe.random() < self.link(u, v).p_data[k - 1]
            peer = self.peers[v][u]
            peer.ewma[k - 1] = ewma_update(peer.ewma[k - 1], received)
            if received:
                heard.append(v)
        self._log("probe", start, u, phy.rate_mbps(k), tuple(heard))

    def _decide(self, u: str, v: str, peer: _Peer, s: int, t: float) -> None:
        if self.variant.rate_algo != "profile" or peer.snr_seen is None:
            return
        peer.decision = select_rate(peer.profile, peer.snr_seen, self.alpha_s, None, self.size,
                                    write_back=False, slot_us=self.mac.slot_us)
        if peer.neighbor.alive:
            d = peer.decision
            self._log("decision", t, u, v, peer.snr_seen, phy.rate_mbps(d.rate), d.value)

    def selected_rate(self, u: str, v: str) -> int:
        algo = self.variant.rate_algo
        peer = self.peers[u][v]
        if algo == "profile":
            return peer.decision.rate if peer.decision is not None else 1
        if algo == "samplerate":
            return samplerate_select(peer.samplerate, self.size).rate
        return int(algo.split(":", 1)[1])

    def estimated_pdr(self, u: str, v: str, k: int) -> float:
        """u's own estimate of the u->v data PDR at rate ``k``."""
        peer = self.peers[u][v]
        est = self.variant.link_estimator
        if est == "snr_profile":
            if peer.snr_seen is None:
                return 0.0
            p = lookup_pdr(peer.profile, k, peer.snr_seen)
            return 0.0 if p is None else p
        if est == "samplerate":
            return peer.samplerate.pdr[k]
        if est == "broadcast":
            return peer.ewma[k - 1].value
        return beacon_estimate(self.peers[v][u].window) or 0.0

    def _trace(self, s: int) -> None:
        for u, v in self.trace_dirs:
            link = self.link(u, v)
            name = f"{u}-{v}"
            at_v = self.peers[v][u]
            at_u = self.peers[u][v]
            beacon = beacon_estimate(at_v.window)
            for k in range(1, phy.N_RATES + 1):
                mbps = phy.rate_mbps(k)
                p = link.p_data[k - 1]
                acks = sum(self.rng_bench.random() < p for _ in range(self.bench_n))
                self.traces.append((s, name, mbps, Method.DATA.value, acks / self.bench_n))
                if beacon is not None:
                    self.traces.append((s, name, mbps, Method.BEACON.value, beacon))
                if self.probes:
                    self.traces.append((s, name, mbps, Method.BROADCAST_EWMA.value, at_v.ewma[k - 1].value))
                if at_u.snr_seen is not None:
                    est = lookup_pdr(at_u.profile, k, at_u.snr_seen)
                    if est is not None:
                        self.traces.append((s, name, mbps, Method.SNR_PROFILE.value, est))

    def _flood_tc(self) -> None:
        for n in self.nodes:
            self.db[n].tick()
        for u in self.nodes:
            adverts = {}
            for v, peer in self.peers[u].items():
                if not peer.neighbor.alive:
                    continue
                k = self.selected_rate(u, v)
                adverts[v] = LinkAdvert(beacon_estimate(peer.window) or 0.0,
                                        self.estimated_pdr(u, v, k), phy.rate_mbps(k))
            for w in self.nodes:
                if w == u or self.rng_tc.random() >= self.tc_loss:
                    self.db[w].receive(u, adverts)

    def _update_route(self, f: FlowStats, s: int, t: float) -> None:
        graph = self.db[f.src].graph(self.variant.route_metric, f.packet_size)
        route = shortest_path(graph, f.src, f.dst)
        f.route = route
        metric = self.variant.route_metric
        if route is None:
            self.routes.append((s, f.src, f.dst, "", 0, metric, math.inf))
            self._log("no_route", t, f.index)
        else:
            self.routes.append((s, f.src, f.dst, ">".join(route.path), route.hops, metric, route.cost))
            self._log("route", t, f.index, route.path, route.cost)

    # -- data ---------------------------------------------------------------

    def _pick_rate(self, u: str, v: str, now_s: float) -> int:
        peer = self.peers[u][v]
        algo = self.variant.rate_algo
        if algo == "profile":
            if peer.decision is None:
                return 1
            return probe_rate(peer.decision, self.rng_rate)
        if algo == "samplerate":
            return samplerate_pick(peer.samplerate, self.size, self.rng_rate, now_s)[1]
        return int(algo.split(":", 1)[1])

    def _send(self, f: FlowStats, t: float) -> None:
        if f.route is None or t >= f.active_until:
            return
        t = max(t, self.medium_free)
        if t >= f.active_until:
            return
        f.sent_packets += 1
        f.sent_bytes += f.packet_size
        path = f.route.path
        ok = True
        for u, v in zip(path, path[1:]):
            link = self.link(u, v)
            k = self._pick_rate(u, v, t / 1e6)
            out = transmit_unicast(link.p_data[k - 1], k, f.packet_size, self.rng_mac, self.mac)
            start = self._claim(t, out.elapsed_us)
            self.tx_id += 1
            self._log("tx", start, start + out.elapsed_us, self.tx_id, f.index, u, v,
                      phy.rate_mbps(k), f.packet_size, out.attempts, out.delivered)
            t = start + out.elapsed_us
            if out.delivered:
                self._log("ack", t, self.tx_id)
            peer = self.peers[u][v]
            samplerate_update(peer.samplerate, k, out.retransmissions, out.delivered, t / 1e6)
            if peer.snr_seen is not None:
                cell = peer.batch[(k, quantize(peer.snr_seen))]
                cell[0] += out.attempts
                cell[1] += int(out.delivered)
            if not out.delivered:
                ok = False
                break
        if ok:
            f.delivered_packets += 1
            f.delivered_bytes += f.packet_size
            self._log("deliver", t, f.index, f.packet_size)
        self._schedule(t, 1, lambda now: self._send(f, now))


def run(doc: dict, variant: sc.Variant | str | None = None, seed: int | None = None,
        profiles: dict[tuple[str, str], SnrProfile] | None = None, keep_events: bool = True) -> RunResult:
    """Run one (variant, seed) replication of a resolved scenario."""
    if variant is None:
        variant = sc.Variant.from_doc(doc["variants"][0])
    elif isinstance(variant, str):
        match = [v for v in doc["variants"] if v["name"] == variant]
        if not match:
            raise KeyError(f"unknown variant {variant!r}")
        variant = sc.Variant.from_doc(match[0])
    seed = doc["seeds"][0] if seed is None else seed
    return Simulation(doc, variant, seed, profiles, keep_events).run()


def run_all(doc: dict, seeds: list[int] | None = None, keep_events: bool = True) -> list[RunResult]:
    """Every variant for every seed; profiles are bootstrapped once per seed."""
    out = []
    for seed in (doc["seeds"] if seeds is None else seeds):
        profiles = build_profiles(doc, seed)
        for v in doc["variants"]:
            out.append(run(doc, sc.Variant.from_doc(v), seed, profiles, keep_events))
    return out
