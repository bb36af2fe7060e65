"""Time-varying exposure mechanisms ``mu_km(t)`` fitted on weighted pseudo-data.

``mu_km(t)`` is the mean of ``A[k-m]`` given the history up to ``k-m`` among
people who would survive to ``t`` had later exposures been zero.  The survival
conditioning is handled by replicating every at-risk individual once per time
bin of period ``k`` and weighting each copy by ``Y(t) * w_km(t)``.

Every exposure model (fitted, hand-set or the simulator's truth) exposes
``values(arrays, rows, offsets)``: an array shaped like ``offsets`` holding
``mu_km(k + offset)`` for the individuals at ``rows`` of a
:class:`~sncure.data.PanelArrays`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import learners
from .data import Individual, Panel, PanelArrays, TimeGrid
from .errors import DegenerateDesign, MissingHistory, OutOfWindow
from .learners import Dataset, LearnerSpec, Predictor
from .terminal import AlphaWeights, log_weight_coefs

EXPOSURE_WINDOW = 6


@dataclass(frozen=True)
class HistoryFeatures:
    """Feature map for the ``(k, m)`` exposure and outcome regressions.

    Columns: exposures of periods ``k-m-1`` back to ``k-m-window`` (truncated at
    ``-M``), the covariates of period ``k-m``, and finally ``t - k``.
    """

    k: int
    m: int
    M: int
    n_cov: int
    window: int = EXPOSURE_WINDOW

    def __post_init__(self):
        if self.k - self.m < -self.M:
            raise MissingHistory(f"period {self.k - self.m} precedes the baseline window")

    @property
    def a_periods(self) -> np.ndarray:
        top = self.k - self.m - 1
        bottom = max(self.k - self.m - self.window, -self.M)
        return np.arange(top, bottom - 1, -1)

    @property
    def n_history(self) -> int:
        return self.a_periods.size + self.n_cov

    @property
    def width(self) -> int:
        return self.n_history + 1

    def history(self, A: np.ndarray, L: np.ndarray) -> np.ndarray:
        """Time-invariant part ``H`` from exposure rows ``A`` and covariate rows ``L``."""
        cols = self.a_periods + self.M
        return np.concatenate([A[:, cols], L[:, self.k - self.m + self.M, :]], axis=1)

    def rows(self, H: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        """Stack ``H`` once per offset: ``(n*q, width)`` in individual-major order."""
        n, q = offsets.shape
        out = np.empty((n * q, self.width))
        out[:, :-1] = np.repeat(H, q, axis=0)
        out[:, -1] = offsets.ravel()
        return out


class ExposureModel:
    """Anything that evaluates ``mu_km`` for rows of a panel."""

    k: int
    m: int
    M: int

    def values(self, arrays: PanelArrays, rows: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class MuFit(ExposureModel):
    k: int
    m: int
    predictor: Predictor
    features: HistoryFeatures
    flavor: str
    n_train: int = 0

    @property
    def M(self) -> int:
        return self.features.M

    def values(self, arrays, rows, offsets):
        offsets = np.asarray(offsets, dtype=float)
        H = self.features.history(arrays.A[rows], arrays.L[rows])
        pred = self.predictor.predict(self.features.rows(H, offsets))
        return pred.reshape(offsets.shape)


@dataclass(frozen=True, eq=False)
class FunctionalMu(ExposureModel):
    """Exposure model given by a vectorised function ``fn(arrays, rows, offsets)``."""

    k: int
    m: int
    fn: Callable
    M: int = 0

    def values(self, arrays, rows, offsets):
        offsets = np.asarray(offsets, dtype=float)
        return np.broadcast_to(np.asarray(self.fn(arrays, rows, offsets), dtype=float),
                               offsets.shape)


@dataclass(frozen=True)
class PseudoData:
    """Replicated rows for one ``(k, m)`` regression, individual-major."""

    dataset: Dataset
    rows: np.ndarray  # panel row of each individual
    offsets: np.ndarray  # (len(rows), bins)
    features: HistoryFeatures

    @property
    def n_individuals(self) -> int:
        return self.rows.size


def risk_rows(arrays: PanelArrays, k: int, rows=None) -> np.ndarray:
    """Panel rows of individuals alive and uncensored at the start of period ``k``."""
    base = np.arange(arrays.X.size) if rows is None else np.asarray(rows)
    return base[arrays.X[base] >= k]


def _check_lag(panel_M, k, m):
    if k < 0 or m < 0 or m > k + panel_M:
        raise MissingHistory(f"(k={k}, m={m}) needs exposures before the baseline window")


def build_pseudo(arrays: PanelArrays, k: int, m: int, grid: TimeGrid, alpha: AlphaWeights | None,
                 target: np.ndarray | None = None, rows=None) -> PseudoData:
    """Pseudo-data for ``(k, m)`` with per-bin weights ``Y(t) * w_km(t)``.

    ``target`` overrides the exposure target with a per-individual-per-bin
    array (used for the outcome regressions); default is ``A[k-m]``.
    """
    _check_lag(arrays.M, k, m)
    rows = risk_rows(arrays, k, rows)
    feats = HistoryFeatures(k, m, arrays.M, arrays.L.shape[2])
    offsets = np.broadcast_to(grid.offsets, (rows.size, grid.bins_per_period))
    Y = arrays.X[rows, None] >= k + offsets
    if m > 0:
        c, s = log_weight_coefs(arrays.A[rows], arrays.M, k, m, alpha)
        w = alpha.apply_cap(np.exp(c[:, None] + s[:, None] * offsets))
    else:
        w = np.ones(offsets.shape)
    weights = (Y * w).ravel()
    if target is None:
        y = np.repeat(arrays.A[rows, arrays.col(k - m)], grid.bins_per_period)
    else:
        y = np.asarray(target, dtype=float).reshape(-1)
    H = feats.history(arrays.A[rows], arrays.L[rows])
    X = feats.rows(H, offsets)
    groups = np.repeat(rows, grid.bins_per_period)
    return PseudoData(Dataset(X, y, weights, groups), rows, np.array(offsets), feats)


def build_pseudo_mu(panel: Panel, k: int, m: int, grid: TimeGrid = TimeGrid(),
                    alpha: AlphaWeights | None = None) -> PseudoData:
    if m > 0 and alpha is None:
        raise ValueError("alpha weights are required for m >= 1")
    return build_pseudo(panel.arrays, k, m, grid, alpha)


def fit_from_pseudo(pseudo: PseudoData, spec: LearnerSpec, flavor: str, k: int, m: int) -> MuFit:
    if flavor == "parametric":
        if spec.kind != "linear":
            raise ValueError("the parametric flavor uses the linear learner")
        contributing = np.unique(pseudo.dataset.groups[pseudo.dataset.weights > 0]).size
        if contributing <= pseudo.features.width:
            raise DegenerateDesign(
                f"(k={k}, m={m}): {contributing} contributing individuals for "
                f"{pseudo.features.width} features")
    elif flavor != "nonparametric":
        raise ValueError(f"unknown flavor {flavor!r}")
    predictor = learners.fit(spec, pseudo.dataset)
    return MuFit(k, m, predictor, pseudo.features, flavor, pseudo.n_individuals)


def fit_mu(panel_or_arrays, k: int, m: int, grid: TimeGrid = TimeGrid(),
           alpha: AlphaWeights | None = None, spec: LearnerSpec = LearnerSpec("linear"),
           flavor: str = "parametric", rows=None) -> MuFit:
    """Fit ``mu_km`` on the pseudo-data of a panel (or a subset of its rows)."""
    arrays = panel_or_arrays.arrays if isinstance(panel_or_arrays, Panel) else panel_or_arrays
    if m > 0 and alpha is None:
        raise ValueError("alpha weights are required for m >= 1")
    pseudo = build_pseudo(arrays, k, m, grid, alpha, rows=rows)
    return fit_from_pseudo(pseudo, spec, flavor, k, m)


def eval_mu(fit: ExposureModel, ind: Individual, t: float) -> float:
    """``mu_km(t)`` for a single individual; ``t`` must lie in ``[k, k+1)``."""
    if not fit.k <= t < fit.k + 1:
        raise OutOfWindow(f"t={t} outside period [{fit.k}, {fit.k + 1})")
    arrays = _single_arrays(ind, fit.M)
    return float(fit.values(arrays, np.array([0]), np.array([[t - fit.k]]))[0, 0])


def _single_arrays(ind: Individual, M: int) -> PanelArrays:
    n_cov = ind.covariates.shape[1]
    width = ind.exposures.size
    L = np.full((1, width, n_cov), np.nan)
    rows = min(ind.covariates.shape[0], width)
    L[0, :rows] = ind.covariates[:rows]
    return PanelArrays(ind.exposures[None, :].copy(), L, np.array([ind.x_time]),
                       np.array([ind.death_observed]), ind.event_times.copy(),
                       np.zeros(ind.event_times.size, dtype=np.int64), M, width - M - 1)
