"""Link metrics, shortest paths and a link-state database fed by TC floods."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

Node = Hashable

DEFAULT_EXPIRY = 3          # TC intervals a link survives without refresh
NEIGHBOR_LOSS_LIMIT = 50    # consecutive lost beacons before a neighbour is dropped


def metric_etx(pdr_fwd: float, pdr_rev: float) -> float:
    if pdr_fwd <= 0 or pdr_rev <= 0:
        return math.inf
    return 1.0 / (pdr_fwd * pdr_rev)


def metric_r(pdr_fwd: float, rate_fwd: float, pdr_rev: float, rate_rev: float) -> float:
    """Rate-aware ETX: each direction costs 1 / (PDR * sqrt(rate in Mbps))."""
    if min(pdr_fwd, pdr_rev, rate_fwd, rate_rev) <= 0:
        return math.inf
    return 1.0 / (pdr_fwd * math.sqrt(rate_fwd)) / (pdr_rev * math.sqrt(rate_rev))


def metric_ett(pdr_fwd: float, rate_fwd: float, pdr_rev: float, rate_rev: float,
               size_bytes: float = 1500.0) -> float:
    """Expected transmission time of both directions, in microseconds."""
    if min(pdr_fwd, pdr_rev, rate_fwd, rate_rev) <= 0:
        return math.inf
    bits = 8.0 * size_bytes
    return bits / (pdr_fwd * rate_fwd) + bits / (pdr_rev * rate_rev)


def metric_hop(*_args) -> float:
    return 1.0


@dataclass
class Route:
    path: tuple
    cost: float

    @property
    def next_hop(self):
        return self.path[1] if len(self.path) > 1 else self.path[0]

    @property
    def hops(self) -> int:
        return len(self.path) - 1


Graph = Mapping[Node, Mapping[Node, float]]


def shortest_path(graph: Graph, src: Node, dst: Node) -> Route | None:
    """Dijkstra over non-negative costs; equal-cost ties go to the
    lexicographically smallest node sequence. ``None`` when unreachable."""
    if src == dst:
        return Route((src,), 0.0)
    heap = [(0.0, (src,))]
    done = set()
    while heap:
        cost, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == dst:
            return Route(path, cost)
        for v, c in graph.get(u, {}).items():
            if v in done or not math.isfinite(c):
                continue
            if c < 0:
                raise ValueError("negative link cost")
            heapq.heappush(heap, (cost + c, path + (v,)))
    return None


def route_table(graph: Graph, src: Node) -> dict[Node, Route]:
    nodes = set(graph) | {v for nbrs in graph.values() for v in nbrs}
    table = {}
    for dst in sorted(nodes - {src}):
        r = shortest_path(graph, src, dst)
        if r is not None:
            table[dst] = r
    return table


@dataclass
class LinkAdvert:
    """What a node says about its link towards one neighbour."""
    rx_ratio: float    # beacon delivery ratio neighbour -> self
    pdr: float         # estimated data PDR self -> neighbour at ``rate``
    rate: float        # selected rate, Mbps


@dataclass
class LinkState:
    endpoints: tuple
    pdr_fwd: float
    pdr_rev: float
    rate_fwd: float
    rate_rev: float
    age: int = 0


@dataclass
class LinkStateDb:
    """One node's view of the topology, refreshed by TC messages."""
    expiry: int = DEFAULT_EXPIRY
    adverts: dict[Node, dict[Node, LinkAdvert]] = field(default_factory=dict)
    age: dict[Node, int] = field(default_factory=dict)

    def receive(self, origin: Node, adverts: Mapping[Node, LinkAdvert]) -> None:
        self.adverts[origin] = dict(adverts)
        self.age[origin] = 0

    def tick(self) -> None:
        for origin in self.age:
            self.age[origin] += 1

    def fresh(self, origin: Node) -> bool:
        return origin in self.adverts and self.age[origin] <= self.expiry

    def link_states(self) -> list[LinkState]:
        """Bidirectional links both of whose ends have a fresh advert."""
        out = []
        for u in sorted(self.adverts, key=str):
            if not self.fresh(u):
                continue
            for v, fwd in sorted(self.adverts[u].items(), key=lambda kv: str(kv[0])):
                if str(u) >= str(v) or not self.fresh(v):
                    continue
                rev = self.adverts[v].get(u)
                if rev is None:
                    continue
                out.append(LinkState((u, v), fwd.pdr, rev.pdr, fwd.rate, rev.rate,
                                     max(self.age[u], self.age[v])))
        return out

    def graph(self, metric: str, size_bytes: float = 1500.0) -> dict[Node, dict[Node, float]]:
        g: dict[Node, dict[Node, float]] = {}
        for u in self.adverts:
            if self.fresh(u):
                g.setdefault(u, {})
        for ls in self.link_states():
            u, v = ls.endpoints
            a_uv, a_vu = self.adverts[u][v], self.adverts[v][u]
            cost = link_cost(metric, a_uv, a_vu, size_bytes)
            if math.isfinite(cost):
                g.setdefault(u, {})[v] = cost
                g.setdefault(v, {})[u] = cost
        return g


def link_cost(metric: str, uv: LinkAdvert, vu: LinkAdvert, size_bytes: float = 1500.0) -> float:
    """Cost of a link from the two endpoint adverts.

    ETX uses the beacon ratios each end measured; the rate-aware metrics use
    each direction's own data-PDR estimate and selected rate.
    """
    if metric == "etx":
        # u->v delivery is what v measured of u's beacons, and vice versa
        return metric_etx(vu.rx_ratio, uv.rx_ratio)
    if metric == "r":
        return metric_r(uv.pdr, uv.rate, vu.pdr, vu.rate)
    if metric == "ett":
        return metric_ett(vu.rx_ratio, uv.rate, uv.rx_ratio, vu.rate, size_bytes)
    if metric == "hop":
        return 1.0 if min(uv.rx_ratio, vu.rx_ratio) > 0 else math.inf
    raise ValueError(f"unknown route metric {metric!r}")


ROUTE_METRICS = ("etx", "r", "ett", "hop")


def path_cost(graph: Graph, path: Iterable[Node]) -> float:
    path = list(path)
    return sum(graph[a][b] for a, b in zip(path, path[1:]))


@dataclass
class NeighborState:
    """Beacon-driven liveness of one neighbour."""
    alive: bool = False
    consecutive_lost: int = 0
    loss_limit: int = NEIGHBOR_LOSS_LIMIT

    def beacon(self, received: bool) -> bool:
        """Register one beacon interval; returns whether the neighbour is alive."""
        if received:
            self.alive = True
            self.consecutive_lost = 0
        else:
            self.consecutive_lost += 1
            if self.consecutive_lost >= self.loss_limit:
                self.alive = False
        return self.alive

