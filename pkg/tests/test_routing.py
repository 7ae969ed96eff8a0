import itertools
import math
import random

import networkx as nx
import pytest
from hypothesis import given, strategies as st

from lqe_lab.routing import (LinkAdvert, LinkStateDb, NeighborState, link_cost, metric_etx, metric_ett, metric_hop,
                             metric_r, path_cost, route_table, shortest_path)


def test_metric_examples():
    assert metric_etx(1, 1) == 1
    assert metric_etx(0.5, 0.5) == 4
    assert metric_etx(1, 0.5) == 2
    assert metric_etx(0, 1) == math.inf
    assert metric_r(1, 1, 1, 1) == 1
    assert metric_r(1, 54, 1, 54) == pytest.approx(1 / 54)
    assert metric_r(0.5, 2, 1, 2) == pytest.approx(1.0)
    assert metric_r(0, 2, 1, 2) == math.inf
    assert metric_ett(1, 1, 1, 1, 1500) == 24000
    assert metric_hop() == 1


@given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 1))
def test_metrics_monotone(a, b, c, d):
    assert metric_etx(max(a, c), b) <= metric_etx(min(a, c), b)
    assert metric_r(max(a, c), 11, b, 11) <= metric_r(min(a, c), 11, b, 11)
    assert metric_etx(a, b) >= 1


def test_shortest_path_examples():
    assert shortest_path({"A": {"B": 1}, "B": {"A": 1}}, "A", "B").path == ("A", "B")
    g = {"A": {"B": 1, "C": 5}, "B": {"A": 1, "C": 1}, "C": {"A": 5, "B": 1}}
    r = shortest_path(g, "A", "C")
    assert r.path == ("A", "B", "C") and r.cost == 2 and r.hops == 2 and r.next_hop == "B"
    assert shortest_path(g, "A", "Z") is None
    assert shortest_path(g, "A", "A").hops == 0
    with pytest.raises(ValueError):
        shortest_path({"A": {"B": -1}}, "A", "B")


def test_tie_break_is_lexicographic():
    g = {"A": {"C": 1, "B": 1}, "B": {"D": 1}, "C": {"D": 1}}
    assert shortest_path(g, "A", "D").path == ("A", "B", "D")


def _random_graph(rng, metric):
    n = rng.randint(2, 7)
    nodes = [f"n{i}" for i in range(n)]
    g = {u: {} for u in nodes}
    for u, v in itertools.combinations(nodes, 2):
        if rng.random() < 0.5:
            pf, pr = rng.uniform(0.05, 1), rng.uniform(0.05, 1)
            if metric == "etx":
                c = metric_etx(pf, pr)
            else:
                c = metric_r(pf, rng.choice([1, 2, 5.5, 11, 54]), pr, rng.choice([1, 6, 24, 54]))
            g[u][v] = g[v][u] = c
    return nodes, g


@pytest.mark.parametrize("metric", ["etx", "r"])
def test_shortest_path_equals_brute_force(metric):
    rng = random.Random(99 if metric == "etx" else 100)
    for _ in range(200):
        nodes, g = _random_graph(rng, metric)
        G = nx.Graph()
        G.add_nodes_from(nodes)
        for u in g:
            for v, c in g[u].items():
                G.add_edge(u, v, w=c)
        src, dst = nodes[0], nodes[-1]
        paths = list(nx.all_simple_paths(G, src, dst))
        got = shortest_path(g, src, dst)
        if not paths:
            assert got is None
            continue
        best = min(sum(G[a][b]["w"] for a, b in zip(p, p[1:])) for p in paths)
        assert got.cost == pytest.approx(best, rel=1e-12)
        assert path_cost(g, got.path) == pytest.approx(got.cost)


def test_route_table():
    g = {"A": {"B": 1}, "B": {"A": 1, "C": 1}, "C": {"B": 1}}
    t = route_table(g, "A")
    assert set(t) == {"B", "C"} and t["C"].path == ("A", "B", "C")


def _line_db(pdrs):
    """Adverts for a line n0..n{k}; pdrs[i] is the n_i <-> n_{i+1} delivery."""
    db = LinkStateDb()
    n = len(pdrs) + 1
    for i in range(n):
        adv = {}
        if i > 0:
            adv[f"n{i-1}"] = LinkAdvert(pdrs[i - 1], pdrs[i - 1], 11.0)
        if i < n - 1:
            adv[f"n{i+1}"] = LinkAdvert(pdrs[i], pdrs[i], 11.0)
        db.receive(f"n{i}", adv)
    return db


def test_link_state_db_graph_and_costs():
    db = _line_db([1.0, 0.5])
    g = db.graph("etx")
    assert g["n0"]["n1"] == 1.0 and g["n1"]["n2"] == 4.0
    assert db.graph("r")["n1"]["n2"] == pytest.approx(1 / (0.25 * 11))
    assert db.graph("hop")["n1"]["n2"] == 1.0
    with pytest.raises(ValueError):
        db.graph("nope")


def test_unchanged_links_keep_routes():
    db = _line_db([1.0, 1.0, 1.0])
    before = route_table(db.graph("etx"), "n0")
    db.tick()
    for origin, adv in list(db.adverts.items()):
        db.receive(origin, adv)
    assert route_table(db.graph("etx"), "n0") == before


def test_reconverges_within_one_interval():
    # five nodes in a line with a longer bypass link n1-n3
    db = _line_db([1.0, 0.9, 0.9, 1.0])
    db.adverts["n1"]["n3"] = LinkAdvert(0.5, 0.5, 11.0)
    db.adverts["n3"]["n1"] = LinkAdvert(0.5, 0.5, 11.0)
    assert shortest_path(db.graph("etx"), "n0", "n4").path == ("n0", "n1", "n2", "n3", "n4")
    # link n2-n3 dies: both ends advertise 0 in the next TC round
    db.tick()
    adv2 = dict(db.adverts["n2"]); adv2["n3"] = LinkAdvert(0.0, 0.0, 11.0)
    adv3 = dict(db.adverts["n3"]); adv3["n2"] = LinkAdvert(0.0, 0.0, 11.0)
    for origin, adv in list(db.adverts.items()):
        db.receive(origin, adv)
    db.receive("n2", adv2)
    db.receive("n3", adv3)
    assert shortest_path(db.graph("etx"), "n0", "n4").path == ("n0", "n1", "n3", "n4")


def test_lost_tc_keeps_stale_state_until_expiry():
    db = _line_db([1.0, 1.0])
    for _ in range(3):
        db.tick()
        db.receive("n0", db.adverts["n0"])
        db.receive("n2", db.adverts["n2"])  # n1's adverts are lost
        assert shortest_path(db.graph("etx"), "n0", "n2") is not None
    db.tick()
    assert not db.fresh("n1")
    assert shortest_path(db.graph("etx"), "n0", "n2") is None


def test_link_cost_directions():
    uv = LinkAdvert(rx_ratio=0.5, pdr=0.9, rate=54)
    vu = LinkAdvert(rx_ratio=1.0, pdr=0.8, rate=11)
    assert link_cost("etx", uv, vu) == 2.0
    assert link_cost("r", uv, vu) == pytest.approx(1 / (0.9 * math.sqrt(54) * 0.8 * math.sqrt(11)))
    assert link_cost("ett", uv, vu, 1500) == pytest.approx(12000 / 54 + 12000 / (0.5 * 11))


def test_neighbor_expiry():
    n = NeighborState()
    assert n.beacon(True)
    for i in range(49):
        assert n.beacon(False)
    assert not n.beacon(False)
    assert n.beacon(True)
