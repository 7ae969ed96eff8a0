import json

import pytest
from hypothesis import given, strategies as st

from lqe_lab.sim import builtins, scenario as sc
from lqe_lab.sim.scenario import ScenarioError, Trajectory, mobility_sweep


def test_mobility_sweep_shape():
    tr = mobility_sweep(5, 50, 300)
    assert tr(0) == 50 and tr(300) == 50
    assert tr(150) == 5
    assert tr(75) == pytest.approx(27.5)
    # trapezoid integral of the out-and-back form
    assert tr.integral() == pytest.approx(300 * (50 + 5) / 2)
    with pytest.raises(ValueError):
        mobility_sweep(50, 5, 10)
    with pytest.raises(ValueError):
        mobility_sweep(5, 50, 0)


@given(st.floats(-10, 20), st.floats(0.5, 40), st.floats(1, 1000), st.floats(0, 1))
def test_sweep_is_symmetric_and_bounded(lo, span, dur, frac):
    tr = mobility_sweep(lo, lo + span, dur, periodic=False)
    t = frac * dur
    assert lo - 1e-9 <= tr(t) <= lo + span + 1e-9
    assert tr(t) == pytest.approx(tr(dur - t), abs=1e-9)


def test_trajectory_interpolation_and_clamp():
    tr = Trajectory([0, 10, 20], [0, 10, 0])
    assert tr(5) == 5 and tr(-1) == 0 and tr(25) == 0
    assert Trajectory([0, 10], [0, 10], periodic=True)(15) == 5
    with pytest.raises(ValueError):
        Trajectory([0, 0], [1, 2])


def test_tandem_generator():
    nodes, links = sc.tandem(4, spacing_m=10)
    assert nodes == ["n0", "n1", "n2", "n3"]
    assert len(links) == 6
    means = {(l["a"], l["b"]): l["snr"]["mean_db"] for l in links}
    assert means[("n0", "n1")] > means[("n0", "n2")] > means[("n0", "n3")]
    doc = sc.resolve({"name": "t", "duration_s": 5, "nodes": nodes, "links": links})
    assert doc["lqe"]["window"] == 10


def test_builtins_load_and_match_generators():
    for name in sc.BUILTIN_NAMES:
        assert sc.builtin_document(name) == json.loads(builtins.render(name))
        doc = sc.load(name)
        assert doc["name"] == name


def _base():
    return {"name": "x", "duration_s": 5, "nodes": ["a", "b"],
            "links": [{"a": "a", "b": "b", "snr": {"model": "constant", "mean_db": 20}}]}


@pytest.mark.parametrize("patch,pointer", [
    ({"duration_s": 0}, "/duration_s"),
    ({"links": [{"a": "a", "b": "b", "snr": {"model": "gaussian"}}]}, "/links/0/snr"),
    ({"links": [{"a": "a", "b": "z", "snr": {"model": "constant", "mean_db": 1}}]}, "/links/0/b"),
    ({"traffic": [{"src": "a", "dst": "b", "load": 1.5}]}, "/traffic/0/load"),
    ({"traffic": [{"src": "a", "dst": "a", "load": 0.5}]}, "/traffic/0"),
    ({"bogus": 1}, "/"),
    ({"links": [{"a": "a", "b": "b", "snr": {"model": "trajectory", "points": [[0, 1], [0, 2]]}}]},
     "/links/0/snr/points"),
    ({"variants": [{"name": "v", "rate_algo": "fixed:13"}]}, "/variants/0/rate_algo"),
])
def test_schema_errors_carry_pointer(patch, pointer):
    doc = _base()
    doc.update(patch)
    with pytest.raises(ScenarioError) as exc:
        sc.resolve(doc)
    assert exc.value.pointer == pointer


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError):
        sc.load(bad)
    with pytest.raises(ScenarioError):
        sc.load(tmp_path / "missing.json")


def test_snr_model_from_doc():
    m = sc.SnrModel.from_doc({"model": "sweep", "min_db": 0, "max_db": 10, "sigma_db": 2}, 100)
    assert m.sigma == 2 and m.mean(50) == 0 and m.mean(150) == 0
    assert sc.SnrModel.from_doc({"model": "constant", "mean_db": 7, "sigma_db": 3}, 1).sigma == 0


def test_path_loss():
    assert sc.snr_at_distance(1) == 60
    assert sc.snr_at_distance(10, exponent=3) == pytest.approx(30)
    assert sc.snr_at_distance(0.1) == 60
