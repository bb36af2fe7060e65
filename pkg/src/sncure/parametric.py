"""Sequential estimator of the lagged exposure effects ``beta_0..beta_M``.

For each lag ``m`` in turn the exposure models ``mu_km`` are fitted on pseudo
data weighted by ``w_km`` (built from ``alpha_0..alpha_{m-1}``), then
``alpha_m`` and ``beta_m`` are solved in closed form.  The blips of earlier
lags are subtracted from the event process before solving for ``beta_m``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Panel, TimeGrid
from .equations import period_sums, period_views, solve_lag
from .exposure import HistoryFeatures, fit_mu
from .learners import LearnerSpec, ensemble_spec
from .quadrature import Quadrature
from .terminal import AlphaWeights, no_alpha

DEFAULT_MIN_RISK_SET = 20


@dataclass
class EffectEstimates:
    beta: np.ndarray
    method: str
    se: np.ndarray | None = None
    ci: np.ndarray | None = None  # (M+1, 2)
    ci_level: float | None = None
    alpha: AlphaWeights | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if not np.all(np.isfinite(self.beta)):
            raise ValueError("effect estimates must be finite")

    @property
    def M_lags(self) -> int:
        return self.beta.size - 1

    def to_dict(self) -> dict:
        d = {"method": self.method, "beta": self.beta.tolist()}
        if self.se is not None:
            d["se"] = np.asarray(self.se).tolist()
            d["ci"] = np.asarray(self.ci).tolist()
            d["ci_level"] = self.ci_level
        if self.alpha is not None:
            d["alpha"] = self.alpha.alpha.tolist()
        d["diagnostics"] = self.diagnostics
        return d


def n_contributing(X: np.ndarray, k: int, grid: TimeGrid) -> int:
    """Individuals with positive pseudo-data weight in period ``k``."""
    return int(np.count_nonzero(X >= k + grid.offsets[0]))


def period_is_fittable(X, k, m, M, n_cov, grid, min_risk_set) -> bool:
    need = max(min_risk_set, HistoryFeatures(k, m, M, n_cov).width + 1)
    return n_contributing(X, k, grid) >= need


class _LagLog:
    def __init__(self):
        self.rows = []

    def add(self, m, sol, pairs, skipped_history, skipped_small, **extra):
        sums = [ps for _, ps in pairs]
        self.rows.append({
            "lag": m, "numerator": sol.numerator, "denominator": sol.denominator,
            "person_periods": sol.person_periods, "periods_used": len(sums),
            "skipped_history": skipped_history, "skipped_small_risk_set": skipped_small,
            "weight_min": min((s.w_min for s in sums), default=1.0),
            "weight_max": max((s.w_max for s in sums), default=1.0),
            "weights_capped": int(sum(s.n_capped for s in sums)),
            **extra})


def _resolve_alpha(alpha, weight_cap):
    if alpha is None:
        return None
    if weight_cap is not None and alpha.weight_cap != weight_cap:
        return AlphaWeights(alpha.alpha, alpha.provenance, weight_cap)
    return alpha


def fit_parametric(panel: Panel, grid: TimeGrid = TimeGrid(), mu_flavor: str = "parametric",
                   spec: LearnerSpec | None = None, alpha: AlphaWeights | None = None,
                   M_lags: int | None = None, *, quadrature: Quadrature | None = None,
                   min_risk_set: int = DEFAULT_MIN_RISK_SET, weight_cap: float | None = None,
                   mu_models: dict | None = None, keep_fits: bool = False) -> EffectEstimates:
    """Exposure-model-only estimator of ``beta_0..beta_{M_lags}``.

    Parameters
    ----------
    mu_flavor
        ``parametric`` fits every ``mu_km`` by weighted least squares;
        ``nonparametric`` uses ``spec`` (default: the stacking ensemble).
    alpha
        Fixed terminal-event effects.  When omitted they are estimated along
        the way from linear exposure models.
    mu_models
        Optional ``{(k, m): ExposureModel}`` overriding fitted models.
    min_risk_set
        Periods with fewer contributing individuals are skipped (and counted)
        rather than fitted.
    """
    panel = panel.canonical()
    arrays = panel.arrays
    M, K, p = panel.M, panel.K, panel.n_covariates
    M_lags = M if M_lags is None else int(M_lags)
    if not 0 <= M_lags <= M:
        raise ValueError(f"M_lags must lie in 0..{M}")
    if mu_flavor not in ("parametric", "nonparametric"):
        raise ValueError(f"unknown mu_flavor {mu_flavor!r}")
    if spec is None:
        spec = LearnerSpec("linear") if mu_flavor == "parametric" else ensemble_spec()
    quad = quadrature or Quadrature(grid)
    views = period_views(arrays, quad)
    mu_models = mu_models or {}
    estimate_alpha_here = alpha is None
    cur = no_alpha(weight_cap) if estimate_alpha_here else _resolve_alpha(alpha, weight_cap)
    if not estimate_alpha_here and len(cur) < M_lags:
        raise ValueError(f"alpha needs at least {M_lags} entries")
    linear = LearnerSpec("linear")

    beta = []
    log = _LagLog()
    alpha_log = _LagLog()
    fits = {}
    for m in range(M_lags + 1):
        models, alpha_models = {}, {}
        skipped_history = skipped_small = 0
        for k in range(K + 1):
            if k - m < -M:
                skipped_history += 1
                continue
            if views[k].n == 0:
                continue
            given = mu_models.get((k, m))
            if given is not None:
                models[k] = alpha_models[k] = given
                continue
            if not period_is_fittable(arrays.X, k, m, M, p, grid, min_risk_set):
                skipped_small += 1
                continue
            models[k] = fit_mu(arrays, k, m, grid, cur, spec, mu_flavor)
            if estimate_alpha_here:
                alpha_models[k] = (models[k] if mu_flavor == "parametric"
                                   else fit_mu(arrays, k, m, grid, cur, linear, "parametric"))
        pairs = [(views[k], period_sums(arrays, views[k], m, models[k], cur)) for k in models]
        if estimate_alpha_here:
            apairs = pairs if mu_flavor == "parametric" else [
                (views[k], period_sums(arrays, views[k], m, alpha_models[k], cur))
                for k in alpha_models]
            asol = solve_lag(arrays, apairs, m, cur.alpha, jump="death", denominator="exposure",
                             what=f"alpha_{m}")
            alpha_log.add(m, asol, apairs, skipped_history, skipped_small, estimate=asol.value)
        sol = solve_lag(arrays, pairs, m, beta, jump="event", denominator="exposure",
                        what=f"beta_{m}")
        beta.append(sol.value)
        log.add(m, sol, pairs, skipped_history, skipped_small, estimate=sol.value)
        if keep_fits:
            fits.update({(k, m): f for k, f in models.items()})
        if estimate_alpha_here:
            cur = cur.extended(asol.value)

    if estimate_alpha_here:
        cur = AlphaWeights(cur.alpha, f"linear exposure models ({mu_flavor} run)", weight_cap)
    diagnostics = {"lags": log.rows, "quadrature": quad.rule, "bins_per_period": grid.bins_per_period,
                   "min_risk_set": min_risk_set, "n": panel.n}
    if estimate_alpha_here:
        diagnostics["alpha_lags"] = alpha_log.rows
    method = "parametric" if mu_flavor == "parametric" else "nonparametric"
    est = EffectEstimates(np.array(beta), method, alpha=cur, diagnostics=diagnostics)
    if keep_fits:
        est.diagnostics["_fits"] = fits
    return est
