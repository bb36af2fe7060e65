"""Cross-fitted robust estimator of the lagged exposure effects.

Individuals are split into ``V`` folds.  For each lag ``m`` and fold ``v`` the
exposure model ``mu_km`` and the outcome model ``rho_km`` (the expected
blipped-down event rate) are trained on the other folds and evaluated on fold
``v``.  Numerators and denominators are pooled over folds and periods before a
single division per lag:

    beta_m = sum [ sum_T w D(T) - int Y w D (blip + rho) dt ] / sum int Y w D^2 dt
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import learners
from .data import Panel, PanelArrays, TimeGrid
from .equations import period_sums, period_view, solve_lag
from .errors import SncureError, TooFewIndividuals
from .exposure import HistoryFeatures, build_pseudo, fit_mu
from .learners import LearnerSpec, Predictor, ensemble_spec
from .parametric import (DEFAULT_MIN_RISK_SET, EffectEstimates, _LagLog, _resolve_alpha,
                         fit_parametric, period_is_fittable)
from .quadrature import Quadrature
from .terminal import AlphaWeights


@dataclass(frozen=True)
class FoldPlan:
    V: int
    assignment: dict  # id -> fold
    seed: int

    def fold_of(self, ids) -> np.ndarray:
        return np.array([self.assignment[i] for i in ids], dtype=np.int64)

    def sizes(self) -> np.ndarray:
        return np.bincount(list(self.assignment.values()), minlength=self.V)


def make_folds(n_or_ids, V: int = 5, seed: int = 0) -> FoldPlan:
    """Uniformly random partition into ``V`` folds whose sizes differ by at most one."""
    ids = list(range(n_or_ids)) if isinstance(n_or_ids, (int, np.integer)) else list(n_or_ids)
    if V < 2:
        raise ValueError("V must be >= 2")
    if len(ids) < V:
        raise TooFewIndividuals(f"{len(ids)} individuals cannot fill {V} folds")
    perm = np.random.default_rng(seed).permutation(len(ids))
    fold = np.empty(len(ids), dtype=np.int64)
    fold[perm] = np.arange(len(ids)) % V
    return FoldPlan(V, {i: int(f) for i, f in zip(ids, fold)}, seed)


@dataclass(frozen=True, eq=False)
class RhoFit:
    """Outcome model stored as a per-unit-time rate."""

    k: int
    m: int
    predictor: Predictor
    features: HistoryFeatures
    bin_width: float

    def values(self, arrays, rows, offsets):
        offsets = np.asarray(offsets, dtype=float)
        H = self.features.history(arrays.A[rows], arrays.L[rows])
        pred = self.predictor.predict(self.features.rows(H, offsets))
        return pred.reshape(offsets.shape) / self.bin_width


def rho_targets(arrays: PanelArrays, rows: np.ndarray, k: int, m: int, grid: TimeGrid,
                beta_prefix) -> np.ndarray:
    """Per-bin event counts minus the blips of lags ``< m`` over the bin width."""
    h = grid.width
    B = grid.bins_per_period
    counts = np.zeros((rows.size, B))
    pos_of = {int(r): i for i, r in enumerate(rows)}
    sel = np.flatnonzero(arrays.ev_period == k)
    for e in sel:
        i = pos_of.get(int(arrays.ev_owner[e]))
        if i is not None:
            b = min(int(np.floor((arrays.ev_time[e] - k) * B)), B - 1)
            counts[i, b] += 1.0
    if len(beta_prefix):
        cols = [arrays.col(k - j) for j in range(len(beta_prefix))]
        blip = arrays.A[np.ix_(rows, cols)] @ np.asarray(beta_prefix, dtype=float)
        counts -= blip[:, None] * h
    return counts


def fit_rho(arrays: PanelArrays, k: int, m: int, grid: TimeGrid, beta_prefix,
            alpha: AlphaWeights | None, spec: LearnerSpec, rows=None) -> RhoFit:
    """Regress blipped bin counts on history and ``t - k`` with weights ``Y w_km``."""
    if len(beta_prefix) != m:
        raise ValueError(f"lag {m} needs {m} earlier estimates, got {len(beta_prefix)}")
    base = np.arange(arrays.X.size) if rows is None else np.asarray(rows)
    risk = base[arrays.X[base] >= k]
    target = rho_targets(arrays, risk, k, m, grid, beta_prefix)
    pseudo = build_pseudo(arrays, k, m, grid, alpha, target=target, rows=risk)
    return RhoFit(k, m, learners.fit(spec, pseudo.dataset), pseudo.features, grid.width)


def fit_robust(panel: Panel, grid: TimeGrid = TimeGrid(), V: int = 5, seed: int = 0,
               spec_mu: LearnerSpec | None = None, spec_rho: LearnerSpec | None = None,
               alpha: AlphaWeights | None = None, M_lags: int | None = None, *,
               quadrature: Quadrature | None = None, min_risk_set: int = DEFAULT_MIN_RISK_SET,
               weight_cap: float | None = None, folds: FoldPlan | None = None,
               mu_models: Callable | None = None, rho_models: Callable | None = None,
               on_fit: Callable | None = None) -> EffectEstimates:
    """Cross-fitted estimator with residual-squared denominators.

    ``mu_models`` / ``rho_models`` optionally map ``(k, m, v)`` to a model that
    replaces the fitted one (return ``None`` to fit).  ``on_fit`` is called as
    ``on_fit(m, v, k, train_rows, validation_rows)`` before each nuisance fit.
    """
    panel = panel.canonical()
    arrays = panel.arrays
    M, K, p = panel.M, panel.K, panel.n_covariates
    M_lags = M if M_lags is None else int(M_lags)
    if not 0 <= M_lags <= M:
        raise ValueError(f"M_lags must lie in 0..{M}")
    spec_mu = spec_mu or ensemble_spec()
    spec_rho = spec_rho or ensemble_spec()
    quad = quadrature or Quadrature(grid)

    parametric = None
    if alpha is None:
        parametric = fit_parametric(panel, grid, "parametric", None, None, M_lags,
                                    quadrature=quad, min_risk_set=min_risk_set,
                                    weight_cap=weight_cap)
        alpha = parametric.alpha
    alpha = _resolve_alpha(alpha, weight_cap)
    if len(alpha) < M_lags:
        raise ValueError(f"alpha needs at least {M_lags} entries")

    ids = [ind.id for ind in panel.individuals]
    plan = folds or make_folds(ids, V, seed)
    fold = plan.fold_of(ids)
    all_rows = np.arange(panel.n)
    fold_rows = [all_rows[fold == v] for v in range(plan.V)]
    views = {(v, k): period_view(arrays, k, quad, fold_rows[v])
             for v in range(plan.V) for k in range(K + 1)}

    beta = []
    log = _LagLog()
    for m in range(M_lags + 1):
        pairs = []
        skipped_history = skipped_small = 0
        for v in range(plan.V):
            val = fold_rows[v]
            train = all_rows[fold != v]
            for k in range(K + 1):
                if k - m < -M:
                    skipped_history += 1
                    continue
                view = views[(v, k)]
                if view.n == 0:
                    continue
                mu = mu_models(k, m, v) if mu_models else None
                rho = rho_models(k, m, v) if rho_models else None
                if mu is None or rho is None:
                    if not period_is_fittable(arrays.X[train], k, m, M, p, grid, min_risk_set):
                        skipped_small += 1
                        continue
                    if np.intersect1d(train, val).size:
                        raise AssertionError("validation rows leaked into training")
                    if on_fit is not None:
                        on_fit(m, v, k, train, val)
                    try:
                        if mu is None:
                            mu = fit_mu(arrays, k, m, grid, alpha, spec_mu, "nonparametric",
                                        rows=train)
                        if rho is None:
                            rho = fit_rho(arrays, k, m, grid, beta, alpha, spec_rho, rows=train)
                    except SncureError as exc:
                        raise type(exc)(f"(k={k}, m={m}, fold={v}): {exc}") from exc
                pairs.append((view, period_sums(arrays, view, m, mu, alpha, rho=rho)))
        sol = solve_lag(arrays, pairs, m, beta, jump="event", denominator="residual",
                        what=f"beta_{m}")
        beta.append(sol.value)
        log.add(m, sol, pairs, skipped_history, skipped_small, estimate=sol.value)

    diagnostics = {"lags": log.rows, "quadrature": quad.rule,
                   "bins_per_period": grid.bins_per_period, "min_risk_set": min_risk_set,
                   "n": panel.n, "V": plan.V, "fold_seed": plan.seed,
                   "fold_sizes": plan.sizes().tolist(),
                   "learner_mu": spec_mu.to_dict(), "learner_rho": spec_rho.to_dict()}
    if parametric is not None:
        diagnostics["parametric_beta"] = parametric.beta.tolist()
    return EffectEstimates(np.array(beta), "robust", alpha=alpha, diagnostics=diagnostics)
