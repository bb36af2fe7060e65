import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sncure.data import Panel, TimeGrid
from sncure.errors import DegenerateDesign, MissingHistory, OutOfWindow
from sncure.exposure import (EXPOSURE_WINDOW, HistoryFeatures, MuFit, build_pseudo_mu, eval_mu,
                             fit_mu)
from sncure.learners import LearnerSpec
from sncure.simulation import SimConfig, simulate_study
from sncure.terminal import AlphaWeights

from .support import constant_model, make_individual


def small_panel(As, Xs, M=0, K=2):
    inds = [make_individual(i, A, X, M=M) for i, (A, X) in enumerate(zip(As, Xs))]
    return Panel(tuple(inds), M, K, K + 0.5)


def test_lag_zero_rows_and_weights():
    panel = small_panel([[0.1, 0.2, 0.3]] * 3, [2.5, 2.5, 1.3])
    pseudo = build_pseudo_mu(panel, 1, 0, TimeGrid(5))
    assert pseudo.dataset.n == 15
    w = pseudo.dataset.weights.reshape(3, 5)
    mids = TimeGrid(5).midpoints(1)
    expected = np.array([[float(X >= t) for t in mids] for X in (2.5, 2.5, 1.3)])
    np.testing.assert_array_equal(w, expected)


def test_lag_one_weight_is_one_when_recent_exposure_is_zero():
    panel = small_panel([[0.5, 0.0, 0.7]], [2.5])
    alpha = AlphaWeights(np.array([0.3]), "test")
    pseudo = build_pseudo_mu(panel, 1, 1, TimeGrid(5), alpha)
    np.testing.assert_array_equal(pseudo.dataset.weights, np.ones(5))


def test_lag_one_weight_hand_value():
    panel = small_panel([[0.5, 2.0, 0.7]], [2.5])
    alpha = AlphaWeights(np.array([0.1]), "test")
    pseudo = build_pseudo_mu(panel, 1, 1, TimeGrid(5), alpha)
    # midpoint offsets 0.1, 0.3, 0.5, 0.7, 0.9; the middle one is t - k = 0.5
    assert pseudo.dataset.weights[2] == pytest.approx(1.1051709180756477, rel=1e-12)
    np.testing.assert_allclose(pseudo.dataset.weights,
                               np.exp(2.0 * 0.1 * TimeGrid(5).offsets), rtol=1e-12)


def test_targets_and_features():
    panel = small_panel([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]], [2.5, 2.5], M=0)
    pseudo = build_pseudo_mu(panel, 2, 1, TimeGrid(2), AlphaWeights(np.array([0.0]), "zero"))
    d = pseudo.dataset
    np.testing.assert_array_equal(d.targets, [0.2, 0.2, 0.5, 0.5])
    # features: A[k-m-1] = A[0], covariate of period k-m, then t - k
    np.testing.assert_array_equal(d.features[:, 0], [0.1, 0.1, 0.4, 0.4])
    np.testing.assert_array_equal(d.features[:, -1], [0.25, 0.75, 0.25, 0.75])


def test_history_window_truncates_at_baseline():
    f = HistoryFeatures(k=1, m=0, M=2, n_cov=2)
    assert f.a_periods.tolist() == [0, -1, -2]
    f = HistoryFeatures(k=20, m=1, M=4, n_cov=2)
    assert f.a_periods.size == EXPOSURE_WINDOW
    assert f.width == EXPOSURE_WINDOW + 2 + 1
    with pytest.raises(MissingHistory):
        HistoryFeatures(k=0, m=3, M=2, n_cov=1)


def test_lag_before_baseline_is_missing_history():
    panel = small_panel([[0.1, 0.2, 0.3]], [2.5])
    with pytest.raises(MissingHistory):
        build_pseudo_mu(panel, 0, 1, TimeGrid(), AlphaWeights(np.array([0.1]), "t"))


@pytest.mark.parametrize("spec,flavor", [(LearnerSpec("linear"), "parametric"),
                                         (LearnerSpec("gbt", rounds=10), "nonparametric")])
def test_constant_exposure_gives_constant_fit(spec, flavor):
    panel = simulate_study(SimConfig(n=60, seed=4))
    flat = Panel(tuple(type(i)(i.id, np.full(i.exposures.shape, 0.37), i.covariates,
                               i.event_times, i.x_time, i.death_observed)
                       for i in panel.individuals), panel.M, panel.K, panel.tau)
    fit = fit_mu(flat, 5, 0, TimeGrid(), None, spec, flavor)
    for ind in flat.individuals[:5]:
        for t in (5.0, 5.3, 5.99):
            assert eval_mu(fit, ind, t) == pytest.approx(0.37, abs=1e-9)


def test_simple_scenario_recovers_the_exposure_model():
    panel = simulate_study(SimConfig(n=5000, seed=11))
    norm = panel.metadata["normalization"]
    scale = norm["hi"] - norm["lo"]
    k = 10
    fit = fit_mu(panel, k, 0, TimeGrid(), None, LearnerSpec("linear"), "parametric")
    pseudo = build_pseudo_mu(panel, k, 0, TimeGrid())
    d = pseudo.dataset
    # independent weighted least squares on the same pseudo-data
    Z = np.column_stack([np.ones(d.n), d.features])
    sw = np.sqrt(d.weights)
    theta = np.linalg.lstsq(Z * sw[:, None], d.targets * sw, rcond=None)[0]
    np.testing.assert_allclose(np.r_[fit.predictor.intercept, fit.predictor.coef], theta,
                               rtol=1e-6, atol=1e-9)
    n_a = fit.features.a_periods.size
    L_coef = fit.predictor.coef[n_a: n_a + 2] * scale
    assert L_coef[0] == pytest.approx(1.0, abs=0.35)
    assert L_coef[1] == pytest.approx(0.5, abs=0.07)
    # lagged exposures carry no information given the current covariates
    assert np.all(np.abs(fit.predictor.coef[:n_a]) < 0.2)


def test_single_individual_is_degenerate_for_the_parametric_flavor():
    panel = small_panel([[0.1, 0.2, 0.3]], [2.5])
    with pytest.raises(DegenerateDesign):
        fit_mu(panel, 1, 0, TimeGrid(), None, LearnerSpec("linear"), "parametric")


def test_parametric_flavor_requires_linear_learner():
    panel = simulate_study(SimConfig(n=40, seed=1))
    with pytest.raises(ValueError):
        fit_mu(panel, 1, 0, TimeGrid(), None, LearnerSpec("gbt"), "parametric")


def test_eval_mu_window():
    fit = constant_model(0.4, 2, 0)
    ind = make_individual(0, [0.1, 0.2, 0.3, 0.4], 3.5)
    assert eval_mu(fit, ind, 2.0) == 0.4
    assert eval_mu(fit, ind, 2.999) == 0.4
    with pytest.raises(OutOfWindow):
        eval_mu(fit, ind, 3.0)
    with pytest.raises(OutOfWindow):
        eval_mu(fit, ind, 1.99)


def test_zero_time_slope_gives_time_constant_values():
    from sncure.learners import LinearPredictor
    feats = HistoryFeatures(k=2, m=0, M=0, n_cov=1)
    pred = LinearPredictor(0.1, np.r_[np.full(feats.width - 1, 0.2), 0.0])
    fit = MuFit(2, 0, pred, feats, "parametric")
    ind = make_individual(0, [0.3, 0.6, 0.9, 0.2], 3.5, cov_value=1.5)
    vals = {eval_mu(fit, ind, t) for t in (2.0, 2.25, 2.5, 2.9)}
    assert len(vals) == 1


def fitted_small(seed=3, k=6, m=1):
    panel = simulate_study(SimConfig(n=300, seed=seed))
    alpha = AlphaWeights(np.array([0.05, 0.02]), "test")
    return panel, alpha, fit_mu(panel, k, m, TimeGrid(), alpha, LearnerSpec("linear"),
                                "parametric")


def test_mu_depends_on_time_only_through_the_offset():
    panel, alpha, fit = fitted_small()
    ind = next(i for i in panel.individuals if i.x_time > 7.5)
    twin = type(ind)("twin", ind.exposures.copy(), ind.covariates.copy(), np.zeros(0),
                     ind.x_time, False)
    for u in (0.0, 0.2, 0.77):
        assert eval_mu(fit, ind, fit.k + u) == eval_mu(fit, twin, fit.k + u)
    row = panel.individuals.index(ind)
    H = fit.features.history(panel.arrays.A[[row]], panel.arrays.L[[row]])
    direct = fit.predictor.predict(np.r_[H[0], 0.3][None, :])[0]
    assert eval_mu(fit, ind, fit.k + 0.3) == pytest.approx(direct, rel=1e-14)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 5000), st.integers(1, 20), st.integers(0, 2))
def test_residuals_are_orthogonal_to_the_features(seed, k, m):
    panel = simulate_study(SimConfig(n=150, seed=seed))
    alpha = AlphaWeights(np.array([0.05, 0.02]), "test")
    pseudo = build_pseudo_mu(panel, k, m, TimeGrid(), alpha)
    d = pseudo.dataset
    contributing = np.unique(d.groups[d.weights > 0]).size
    if contributing <= pseudo.features.width:
        return
    fit = fit_mu(panel, k, m, TimeGrid(), alpha, LearnerSpec("linear"), "parametric")
    resid = d.targets - fit.predictor.predict(d.features)
    Z = np.column_stack([np.ones(d.n), d.features])
    score = Z.T @ (d.weights * resid)
    scale = np.abs(Z).T @ (d.weights * np.abs(d.targets))
    assert np.all(np.abs(score) <= 1e-6 * scale)


def test_weight_cap_clamps_pseudo_weights():
    panel = small_panel([[0.5, 3.0, 0.7]], [2.5])
    alpha = AlphaWeights(np.array([1.0]), "test", weight_cap=2.0)
    w = build_pseudo_mu(panel, 1, 1, TimeGrid(5), alpha).dataset.weights
    assert w.max() == 2.0
    assert w[0] == pytest.approx(math.exp(0.3))
