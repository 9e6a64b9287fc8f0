import csv
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lotflow.bench import (
    DIMENSIONS,
    BenchConfig,
    CaseResult,
    build_testbed,
    confidence_interval,
    mape,
    mape_interval,
    pivot,
    rmse,
    rmse_interval,
    run_case,
    sample_cases,
    stability_test,
    write_cases,
    write_ci,
    write_pivot,
    write_stability,
)
from lotflow.ga import GaConfig
from lotflow.heuristic import HeuristicConfig

SMALL_GA = GaConfig(population=40, elite=4, generations=60, train_scenarios=100)


def test_testbed_shape():
    bed = build_testbed()
    assert len(bed) == 640
    assert bed == build_testbed()
    insts = [c.instance() for c in bed[:20]]
    assert all(i.T == 6 and i.h == 1 and i.I0 == 0 for i in insts)
    first = bed[0]
    assert (first.pattern, first.B0, first.p, first.a, first.v, first.pi, first.b) == ("STA", 0, 5, 10, 1, 2, 0.05)
    assert [d.mean for d in first.instance().demand] == [7.0] * 6
    for dim in DIMENSIONS:
        counts = {}
        for c in bed:
            counts[c.tag(dim)] = counts.get(c.tag(dim), 0) + 1
        assert set(counts.values()) == ({64} if dim == "pattern" else {320})


def test_sample_cases_is_seeded():
    bed = build_testbed()
    a = sample_cases(bed, 32, 7)
    assert a == sample_cases(bed, 32, 7)
    assert len({c.index for c in a}) == 32
    assert a != sample_cases(bed, 32, 8)
    with pytest.raises(ValueError):
        sample_cases(bed, 0, 1)


def test_rmse_examples():
    assert rmse([2, 2], [1, 3]) == 1.0
    assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert rmse([0], [3]) == 3.0
    with pytest.raises(ValueError):
        rmse([1], [1, 2])


def test_mape_examples(caplog):
    assert float(mape([2, 4], [1, 3])) == pytest.approx(37.5)
    assert float(mape([1, 2], [1, 2])) == 0.0
    with caplog.at_level(logging.WARNING):
        res = mape([1e-12], [1])
    assert res.excluded == 1 and math.isnan(res.value)
    assert "excluded" in caplog.text
    assert mape([1e-12, 2], [1, 1]).value == pytest.approx(50.0)


def test_confidence_interval_examples():
    assert confidence_interval([3.0, 3.0, 3.0]) == (3.0, 0.0)
    mean, half = confidence_interval([0.0, 2.0])
    assert mean == 1.0 and half == pytest.approx(1.96)
    with pytest.raises(ValueError):
        confidence_interval([1.0])


def test_rmse_interval_delta_method():
    opt = np.zeros(400)
    ach = np.random.default_rng(0).normal(0, 2, 400)
    value, half = rmse_interval(opt, ach)
    assert value == pytest.approx(rmse(opt, ach))
    sq = ach**2
    assert half == pytest.approx(1.96 * sq.std(ddof=1) / 20 / (2 * value))


def _fake_results(n=40, seed=0):
    rng = np.random.default_rng(seed)
    bed = sample_cases(build_testbed(), n, seed)
    out = []
    for c in bed:
        opt = rng.normal(20, 30)
        out.append(CaseResult(c, opt, {"A": opt - abs(rng.normal(0, 2)), "B": opt - abs(rng.normal(0, 5))}))
    return out


def test_pivot_marginals():
    results = _fake_results()
    rep = pivot(results, ("A", "B"))
    g = rep.general()
    opt = [r.optimal for r in results]
    for m in ("A", "B"):
        ach = [r.means[m] for r in results]
        assert g.rmse[m][0] == rmse(opt, ach)  # union of cases, not a mean of groups
        assert abs(g.mape[m][0] - mape(opt, ach).value) < 1e-9
    for dim in DIMENSIONS:
        assert sum(r.cases for r in rep.rows if r.dimension == dim) == len(results)
    assert g.cases == len(results)


def test_failed_cases_are_excluded():
    results = _fake_results(10)
    results[3].error = "boom"
    rep = pivot(results, ("A", "B"))
    assert rep.failed == [results[3].case.index]
    assert rep.general().cases == 9


def test_writers(tmp_path):
    results = _fake_results()
    rep = pivot(results, ("A", "B"))
    for metric in ("rmse", "mape"):
        rows = list(csv.reader(write_pivot(rep, tmp_path, metric).open()))
        assert rows[0] == ["Parameter", "Value", "Cases", "A", "B"]
        assert any(r[0] == "General" for r in rows)
        assert any(r[0] == "Fixed order cost" for r in rows)
    ci = list(csv.reader(write_ci(rep, tmp_path).open()))
    assert {r[0] for r in ci[1:]} == {"RMSE", "MAPE"}
    cases = list(csv.reader(write_cases(results, tmp_path, ("A", "B")).open()))
    assert len(cases) == len(results) + 1


@pytest.mark.slow
def test_single_case_pipeline():
    case = build_testbed()[5]
    cfg = BenchConfig(scenarios=500, ga=SMALL_GA, heuristic=HeuristicConfig(samples=100))
    res = run_case(case, cfg)
    assert res.ok, res.error
    assert set(res.means) == {"GA-sQS", "GA-sS", "GA-RS", "Sim-opt", "GA-RQ"}
    # an SDP-optimal policy replayed gives zero error by construction
    rep = pivot([CaseResult(case, res.optimal, {"SDP-replay": res.optimal})], ("SDP-replay",))
    assert rep.general().rmse["SDP-replay"][0] == 0.0
    assert run_case(case, cfg).means == res.means


@pytest.mark.slow
def test_stability_layout_and_degenerate_replication(tmp_path):
    case = build_testbed()[5]
    rows = stability_test([case], sizes=(20, 40), runs=3, families=("ss", "rq"),
                          eval_scenarios=300, ga=SMALL_GA, seeds=[4, 4, 4])
    assert len(rows) == 2 * 2 * 2
    assert {(r.test, r.statistic) for r in rows} == {
        ("in-sample", "STD"), ("in-sample", "RMSE"), ("out-of-sample", "STD"), ("out-of-sample", "RMSE")}
    assert all(r.values[f] == 0.0 for r in rows if r.statistic == "STD" for f in ("ss", "rq"))
    out = list(csv.reader(write_stability(rows, tmp_path, ("ss", "rq")).open()))
    assert out[0] == ["Scenarios", "Test", "Statistic", "(s,S)", "(R,Q)"]


@settings(max_examples=50)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=30))
def test_mape_interval_centre_is_mape(xs):
    opt = np.array(xs) + 200.0
    ach = np.array(xs)
    assert mape_interval(opt, ach)[0] == pytest.approx(mape(opt, ach).value)
