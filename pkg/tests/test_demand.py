import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lotflow.demand import (
    PATTERNS,
    DemandModel,
    UnknownPatternError,
    draw_block,
    generate_scenarios,
    pattern_means,
    truncate_poisson,
)

import oracles
from conftest import six_period_instance, two_point_instance


@pytest.mark.parametrize("mean", [0.5, 3, 7, 8, 12.5])
@pytest.mark.parametrize("eps", [1e-3, 1e-6])
def test_truncation_matches_termwise_oracle(mean, eps):
    vals, probs = truncate_poisson(mean, eps)
    ref_vals, ref_probs = oracles.poisson_truncated(mean, eps)
    assert list(vals) == ref_vals
    assert np.allclose(probs, ref_probs, rtol=1e-9, atol=1e-15)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_truncation_edge_cases():
    vals, probs = truncate_poisson(0.0)
    assert list(vals) == [0] and list(probs) == [1.0]
    with pytest.raises(ValueError):
        truncate_poisson(-1)
    with pytest.raises(ValueError):
        truncate_poisson(3, eps=0)


def test_patterns():
    assert len(PATTERNS) == 10
    assert pattern_means("STA") == (7,) * 6
    assert all(len(m) == 6 for m in PATTERNS.values())
    with pytest.raises(UnknownPatternError):
        pattern_means("NOPE")


def test_pmf_validation():
    with pytest.raises(ValueError):
        DemandModel.pmf([1, 2], [0.5, 0.4])
    with pytest.raises(ValueError):
        DemandModel.pmf([2, 1], [0.5, 0.5])
    with pytest.raises(ValueError):
        DemandModel.pmf([-1, 1], [0.5, 0.5])
    with pytest.raises(ValueError):
        DemandModel.from_dict({"kind": "poisson", "mean": 3, "sd": 1})


def test_descriptor_roundtrip():
    for d in (DemandModel.poisson(4.5), DemandModel.pmf([0, 3], [0.25, 0.75])):
        assert DemandModel.from_dict(d.to_dict()) == d


def test_scenarios_reproducible_and_prefix_stable():
    inst = six_period_instance()
    a = generate_scenarios(inst, 5000, 11)
    b = generate_scenarios(inst, 5000, 11)
    assert np.array_equal(a.paths, b.paths)
    # scenario i depends only on (seed, i, t): a shorter set is a prefix
    short = generate_scenarios(inst, 1234, 11)
    assert np.array_equal(short.paths, a.paths[:1234])
    assert not np.array_equal(generate_scenarios(inst, 5000, 12).paths, a.paths)


@pytest.mark.parametrize("threads", [2, 3, 8])
def test_scenarios_bit_identical_across_threads(threads):
    inst = six_period_instance()
    one = generate_scenarios(inst, 10_007, 5, threads=1)
    many = generate_scenarios(inst, 10_007, 5, threads=threads)
    assert np.array_equal(one.paths, many.paths)


def test_environment_thread_setting(monkeypatch):
    inst = six_period_instance()
    monkeypatch.setenv("LOTFLOW_THREADS", "4")
    assert np.array_equal(generate_scenarios(inst, 999, 3).paths, draw_block(inst.demand, 3, 0, 999))


def test_draws_follow_pmf():
    inst = six_period_instance()
    paths = generate_scenarios(inst, 200_000, 1).paths
    for t, d in enumerate(inst.demand):
        vals, probs = d.support()
        freq = np.bincount(paths[:, t], minlength=len(vals))[: len(vals)] / len(paths)
        assert np.abs(freq - probs).max() < 5e-3
        assert paths[:, t].max() <= vals[-1]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**63), start=st.integers(0, 500), length=st.integers(1, 200))
def test_blocks_are_windows_of_one_stream(seed, start, length):
    inst = two_point_instance()
    whole = draw_block(inst.demand, seed, 0, start + length)
    assert np.array_equal(draw_block(inst.demand, seed, start, start + length), whole[start:])
