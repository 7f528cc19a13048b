import math
import os
import statistics

import pytest

import kacdiff

CONFIGS = os.environ.get("KACDIFF_CONFIGS", os.path.join(os.path.dirname(__file__), "..", "..", "configs"))


def test_version():
    assert kacdiff.__version__.count(".") == 2


def test_brownian_exit_time():
    bm = kacdiff.Model.brownian()
    grid = [i / 16 for i in range(17)]
    table = kacdiff.exit_moment_table(bm, 0.0, 1.0, grid, 1)
    for x, v in zip(grid, table["values"][1]):
        assert abs(v - x * (1 - x)) < 1e-8
    assert table["values"][0] == [1.0] * len(grid)
    assert kacdiff.mean_exit_time(bm, 0.0, 1.0, 0.25) == pytest.approx(0.1875, abs=1e-9)


def test_ou_classification_and_invariant_law():
    ou = kacdiff.Model.ou(1.0)
    report = kacdiff.classify(ou)
    assert report["kind"] == "PositiveRecurrent"
    assert report["speed_mass"] == pytest.approx(math.sqrt(4 * math.pi), rel=1e-7)
    assert kacdiff.invariant_probability(ou, -0.5, 0.5) == pytest.approx(math.erf(0.5), rel=1e-7)
    assert kacdiff.classify(kacdiff.Model.brownian())["kind"] == "NullRecurrent"


def test_infinite_second_moment():
    bd = kacdiff.Model.bounded_drift(1.0)
    table = kacdiff.hitting_moment_table(bd, 20.0, "from_above", [25.0, 50.0, 100.0], 2)
    assert all(math.isfinite(v) for v in table["values"][1])
    assert all(math.isinf(v) for v in table["values"][2])
    assert kacdiff.simultaneity_consistent(table["values"])
    assert table["csv"].startswith("# target=20")


def test_brackets_and_bounds():
    lo, val, hi = kacdiff.integral_I(1.0, 3.0, 2.0, 1.0)
    assert lo <= val <= hi
    lo, val, hi = kacdiff.integral_J(1.0, 0.5, 3.0, 1.0)
    assert lo <= val <= hi
    floor = kacdiff.RestoringFloor(sigma0=1.0, gamma=0.0, r=0.6)
    ceiling = kacdiff.RestoringCeiling(sigma1=1.0, delta=0.0, R=1.5)
    bd = kacdiff.Model.bounded_drift(1.0)
    v = kacdiff.hitting_moment_table(bd, 20.0, "from_above", [50.0], 1)["values"][1][0]
    assert kacdiff.moment_lower_bound(10.0, ceiling, 1, 50.0, 20.0) <= v <= kacdiff.moment_upper_bound(10.0, floor, 1, 50.0)
    with pytest.raises(kacdiff.RangeError):
        kacdiff.moment_upper_bound(10.0, floor, 2, 50.0)


def test_custom_model_and_errors():
    m = kacdiff.Model.custom("-k*x", "1", {"k": 2.0})
    assert m.drift(1.5) == pytest.approx(-3.0)
    assert "custom" in m.description
    with pytest.raises(kacdiff.ParseError):
        kacdiff.Model.custom("-x * (1 +", "1")
    with pytest.raises(kacdiff.KacdiffError):
        kacdiff.mean_exit_time(kacdiff.Model.brownian(), 1.0, 0.0, 0.5)


def test_hitting_monte_carlo_matches_quadrature():
    ou = kacdiff.Model.ou(1.0)
    exact = kacdiff.hitting_moment_table(ou, 0.0, "from_above", [1.0], 1)["values"][1][0]
    est = kacdiff.estimate_hitting_moments(ou, 1.0, 0.0, max_order=1, h=1e-3, horizon=40.0, replicas=2000, seed=3)
    assert abs(est[0]["estimate"] - exact) <= 4 * est[0]["std_error"]


def test_regeneration_constants_and_cycles():
    ou = kacdiff.Model.ou(1.0)
    est = kacdiff.estimate_constants(ou, (-0.5, 0.5), p=2.0, h=1e-2, horizon=100.0, replicas=100, seed=2)
    assert est["cycles"] > 1000
    lt = est["l_times_e_a_r1"]
    assert abs(lt["value"] - 1.0) <= 4 * lt["std_error"]
    cycles = kacdiff.cycle_integrals(ou, "1", h=1e-2, horizon=20.0, replicas=20, seed=4)
    assert len(cycles) == 20
    # f = 1 integrates to the cycle length, about 1 / l on average
    lengths = [c for rep in cycles for c in rep]
    assert statistics.mean(lengths) == pytest.approx(1.0 / est["l_hat"]["value"], rel=0.25)


def test_runs_are_reproducible():
    ou = kacdiff.Model.ou(1.0)
    a = kacdiff.cycle_integrals(ou, (-0.5, 0.5), h=1e-2, horizon=10.0, replicas=8, seed=9, threads=1)
    b = kacdiff.cycle_integrals(ou, (-0.5, 0.5), h=1e-2, horizon=10.0, replicas=8, seed=9, threads=4)
    assert a == b


def test_cli_commands_in_process(tmp_path):
    assert kacdiff.run("selftest")["exit_code"] == 0
    r = kacdiff.run("model", os.path.join(CONFIGS, "ou.cfg"), out=str(tmp_path))
    assert r["exit_code"] == 0
    text = (tmp_path / "model_report.txt").read_text()
    assert "PositiveRecurrent" in text
    with pytest.raises(kacdiff.ConfigError):
        kacdiff.run("nonsense", os.path.join(CONFIGS, "ou.cfg"))
