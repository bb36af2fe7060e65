import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sncure.errors import BootstrapFailure, DegenerateDenominator, DimensionMismatch
from sncure.estimator import EstimatorConfig
from sncure.inference import (BootstrapResult, bootstrap, bootstrap_se, normal_quantile,
                              replicate_positions, summarize)
from sncure.parametric import EffectEstimates
from sncure.simulation import SimConfig, simulate_study


@pytest.fixture(scope="module")
def panel():
    return simulate_study(SimConfig(n=150, seed=13))


def parametric(panel, seed):
    return EstimatorConfig("parametric", M_lags=1).fit(panel, seed)


def test_single_replicate_has_zero_se(panel):
    res = bootstrap(panel, parametric, R=1, seed=0)
    assert res.R == 1
    np.testing.assert_array_equal(res.se, [0.0, 0.0])


def test_identical_clones_give_zero_se(panel):
    clone = panel.resample([0] * panel.n)
    fixed = EffectEstimates(np.array([0.1, 0.2]), "parametric")
    res = bootstrap(clone, lambda p, s: EffectEstimates(
        np.array([float(np.mean([i.x_time for i in p.individuals])), 0.0]), "t"),
        R=5, seed=1, point=fixed)
    np.testing.assert_array_equal(res.se, [0.0, 0.0])


def test_bootstrap_se_uses_the_population_form():
    reps = np.array([[1.0], [3.0]])
    assert bootstrap_se(reps).tolist() == [1.0]


def test_summary_half_width_at_95_percent():
    point = EffectEstimates(np.array([0.5]), "parametric")
    res = BootstrapResult(np.zeros((2, 1)), np.array([0.02]), 0.95, "parametric", point, 2)
    est = summarize(res)
    assert est.ci[0, 1] - est.beta[0] == pytest.approx(0.0392, abs=1e-4)
    assert est.se.tolist() == [0.02]
    assert est.diagnostics["bootstrap"]["R"] == 2


def test_summary_half_width_at_50_percent():
    point = EffectEstimates(np.array([0.0]), "parametric")
    res = BootstrapResult(np.zeros((2, 1)), np.array([1.0]), 0.5, "parametric", point, 2)
    assert summarize(res).ci[0, 1] == pytest.approx(0.6745, abs=1e-4)


@given(st.floats(0.01, 0.99))
def test_normal_quantile_is_symmetric(level):
    z = normal_quantile(level)
    assert z > 0
    from scipy.stats import norm
    assert norm.cdf(z) - norm.cdf(-z) == pytest.approx(level, abs=1e-10)


def test_dimension_mismatch():
    point = EffectEstimates(np.array([0.1, 0.2]), "parametric")
    res = BootstrapResult(np.zeros((2, 3)), np.zeros(3), 0.95, "parametric", point, 2)
    with pytest.raises(DimensionMismatch):
        summarize(res)


def test_bootstrap_is_deterministic(panel):
    a = bootstrap(panel, parametric, R=4, seed=5)
    b = bootstrap(panel, parametric, R=4, seed=5)
    assert np.array_equal(a.replicates, b.replicates)
    c = bootstrap(panel, parametric, R=4, seed=6)
    assert not np.array_equal(a.replicates, c.replicates)


def test_bootstrap_ignores_individual_order(panel):
    shuffled = panel.subset(np.random.default_rng(2).permutation(panel.n))
    a = bootstrap(panel, parametric, R=3, seed=5)
    b = bootstrap(shuffled, parametric, R=3, seed=5)
    assert np.array_equal(a.replicates, b.replicates)


def test_parallel_matches_serial(panel):
    a = bootstrap(panel, parametric, R=3, seed=8, threads=1)
    b = bootstrap(panel, parametric, R=3, seed=8, threads=2)
    assert np.array_equal(a.replicates, b.replicates)


def test_replicates_resample_whole_individuals(panel):
    seen = []

    def spy(p, seed):
        seen.append(sorted(round(i.x_time, 12) for i in p.individuals))
        return parametric(p, seed)

    bootstrap(panel, spy, R=2, seed=3, point=EffectEstimates(np.zeros(2), "parametric"))
    for r, times in enumerate(seen):
        pos, _ = next(replicate_positions(panel.n, 3, r))
        expected = sorted(round(panel.canonical().individuals[i].x_time, 12) for i in pos)
        assert times == expected


def test_failed_replicates_are_redrawn(panel):
    state = {"calls": 0}

    def sometimes(p, seed):
        state["calls"] += 1
        if state["calls"] % 2 == 0:
            raise DegenerateDenominator("unlucky draw")
        return EffectEstimates(np.array([float(seed % 7)]), "t")

    point = EffectEstimates(np.zeros(1), "t")
    res = bootstrap(panel, sometimes, R=4, seed=1, point=point)
    assert res.R == 4 and res.n_excluded == 0 and res.retries > 0
    assert any("unlucky draw" in f for f in res.failures)


def test_persistent_failures_are_excluded(panel):
    def one_bad(p, seed):
        bad = {s for _, s in replicate_positions(p.n, 9, 0)}
        if seed in bad:
            raise DegenerateDenominator("always")
        return EffectEstimates(np.array([1.0]), "t")

    point = EffectEstimates(np.zeros(1), "t")
    res = bootstrap(panel, one_bad, R=10, seed=9, point=point)
    assert res.n_excluded == 1 and res.R == 9


def test_too_many_failures_raise(panel):
    def never(p, seed):
        raise DegenerateDenominator("always")

    with pytest.raises(BootstrapFailure):
        bootstrap(panel, never, R=5, seed=0, point=EffectEstimates(np.zeros(1), "t"))


@pytest.mark.parametrize("kw", [dict(R=0), dict(R=2, ci_level=1.0)])
def test_argument_validation(panel, kw):
    with pytest.raises(ValueError):
        bootstrap(panel, parametric, seed=0, **kw)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30))
def test_se_is_shift_invariant(values):
    reps = np.array(values)[:, None]
    np.testing.assert_allclose(bootstrap_se(reps + 3.0), bootstrap_se(reps), atol=1e-9)
