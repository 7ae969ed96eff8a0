import pytest

from lqe_lab.sim import scenario as sc


def two_node(snr=None, load=1.0, duration=10, variants=None, **extra):
    """Resolved two-node scenario S<->D."""
    doc = {
        "name": "unit",
        "duration_s": duration,
        "nodes": ["S", "D"],
        "links": [{"a": "S", "b": "D", "snr": snr or {"model": "constant", "mean_db": 60}}],
        "traffic": [{"src": "S", "dst": "D", "load": load}],
        "profile": {"bootstrap_s": 200},
        "variants": variants or [{"name": "fixed54", "rate_algo": "fixed:12", "route_metric": "hop"}],
    }
    doc.update(extra)
    return sc.resolve(doc)


@pytest.fixture
def make_two_node():
    return two_node
