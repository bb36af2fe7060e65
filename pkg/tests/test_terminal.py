import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sncure.data import TimeGrid
from sncure.parametric import fit_parametric
from sncure.quadrature import Quadrature
from sncure.simulation import SimConfig, simulate_study
from sncure.terminal import AlphaWeights, estimate_alpha, log_weight_coefs, weight

from .oracles import toys
from .support import formula_model, make_individual, toy_panel

# brute-force Riemann oracle (tests/oracles/riemann.py), frozen
TOY2_ALPHA0 = 0.23166023166023156

GAUSS = Quadrature(TimeGrid(), "gauss")


def test_no_deaths_gives_zero_alpha():
    panel = simulate_study(SimConfig(n=200, seed=5, frailty_mean=0.0, alpha_true=(0.0, 0.0),
                                     c=0.0))
    assert not any(ind.death_observed for ind in panel.individuals)
    est = fit_parametric(panel, M_lags=3)
    np.testing.assert_array_equal(est.alpha.alpha, np.zeros(4))


def test_two_individual_ratio_matches_the_oracle():
    panel = toy_panel(toys.TOY2)
    mus = {(k, 0): formula_model(toys.zero_mu, k, 0, 0) for k in range(2)}
    alpha = estimate_alpha(panel, mus, TimeGrid(), GAUSS)
    assert alpha.alpha[0] == pytest.approx(TOY2_ALPHA0, rel=1e-9)
    # by hand: 0.3 / (0.4**2 + 0.7**2 * 0.9 + 0.8**2 + 0.3**2 * 0.6)
    assert TOY2_ALPHA0 == pytest.approx(0.3 / 1.295, rel=1e-12)


def one(A, M=0):
    return make_individual(0, A, float(len(A) - M - 1) + 0.5, M=M)


def test_weight_lag_zero_is_one():
    ind = one([3.0, 2.0, 1.0])
    for t in (1.0, 1.5, 1.99):
        assert weight(ind, 1, 0, t, AlphaWeights(np.array([5.0]), "t"), 0) == 1.0


def test_weight_lag_one_hand_value():
    ind = one([0.0, 2.0, 0.0])
    assert weight(ind, 1, 1, 1.5, AlphaWeights(np.array([0.1]), "t"), 0) == pytest.approx(
        math.exp(0.1), rel=1e-14)


def test_weight_lag_three_structure():
    A = [0.3, 0.7, 0.2, 0.9, 0.4]  # periods -2..2
    ind = one(A, M=2)
    a = np.array([0.05, -0.2, 0.3])
    k, u = 2, 0.35
    A_k, A_k1, A_k2 = A[k + 2], A[k + 1], A[k]
    expected = math.exp(A_k * a[0] * u + A_k1 * (a[0] + a[1] * u)
                        + A_k2 * (a[0] + a[1] + a[2] * u))
    assert weight(ind, k, 3, k + u, AlphaWeights(a, "t"), 2) == pytest.approx(expected, rel=1e-14)


@given(st.integers(1, 4), st.floats(0, 0.999), st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_zero_exposures_give_unit_weight(m, u, a):
    ind = one([0.0] * 9, M=4)
    assert weight(ind, 4, m, 4 + u, AlphaWeights(np.array(a), "t"), 4) == 1.0


@given(st.integers(1, 3), st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3),
       st.lists(st.floats(0, 1), min_size=7, max_size=7))
def test_weight_is_log_linear_within_a_period(m, a, A):
    ind = one(A, M=3)
    al = AlphaWeights(np.array(a), "t")
    logs = [math.log(weight(ind, 3, m, 3 + u, al, 3)) for u in (0.1, 0.4, 0.7)]
    assert logs[2] - logs[1] == pytest.approx(logs[1] - logs[0], abs=1e-12)
    c, s = log_weight_coefs(np.asarray(A)[None, :], 3, 3, m, al)
    assert logs[0] == pytest.approx(c[0] + 0.1 * s[0], abs=1e-12)


def test_weight_rejects_times_outside_the_period():
    with pytest.raises(ValueError):
        weight(one([0.1, 0.2, 0.3]), 1, 1, 2.0, AlphaWeights(np.array([0.1]), "t"), 0)


def test_weight_cap():
    al = AlphaWeights(np.array([2.0]), "t", weight_cap=1.5)
    ind = one([0.0, 1.0, 0.0])
    assert weight(ind, 1, 1, 1.9, al, 0) == 1.5
    al = AlphaWeights(np.array([-2.0]), "t", weight_cap=1.5)
    assert weight(ind, 1, 1, 1.9, al, 0) == pytest.approx(1 / 1.5)


def test_sequential_fixed_point():
    panel = simulate_study(SimConfig(n=600, seed=9))
    first = fit_parametric(panel, M_lags=3, keep_fits=True)
    again = estimate_alpha(panel, first.diagnostics["_fits"], TimeGrid(), M_lags=3)
    np.testing.assert_allclose(again.alpha, first.alpha.alpha, rtol=1e-12, atol=1e-15)
    frozen = fit_parametric(panel, M_lags=3, alpha=first.alpha)
    np.testing.assert_allclose(frozen.beta, first.beta, rtol=1e-12, atol=1e-15)


def test_alpha_weights_validation():
    with pytest.raises(ValueError):
        AlphaWeights(np.array([np.nan]), "t")
    assert AlphaWeights(np.array([0.1]), "t").extended(0.2).alpha.tolist() == [0.1, 0.2]
