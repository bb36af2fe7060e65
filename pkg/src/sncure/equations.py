"""Per-period sums of the linear estimating equations for ``alpha`` and ``beta``.

Every equation has the form

    sum_i sum_k [ sum_{jumps T in period k} w(T) D(T)  -  int_k^{k+1} Y w D (blip + rho) dt ]
        = theta * int Y w D Z dt

with ``D = A[k-m] - mu_km`` and ``Z`` either ``A[k-m]`` or ``D``, so each lag is
solved as a ratio of two pooled sums.  Jump terms are evaluated exactly at the
event (or death) time; ``dt`` integrals use a :class:`Quadrature`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import PanelArrays
from .errors import DegenerateDenominator
from .quadrature import Quadrature
from .terminal import AlphaWeights, log_weight_coefs

DENOMINATOR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PeriodView:
    """Risk set, quadrature nodes and jump times of one period ``k``."""

    k: int
    rows: np.ndarray  # panel rows with X >= k
    offsets: np.ndarray  # (n, q)
    qweights: np.ndarray  # (n, q), include Y
    ev_pos: np.ndarray  # position in ``rows`` of each event in the period
    ev_off: np.ndarray
    death_pos: np.ndarray
    death_off: np.ndarray

    @property
    def n(self) -> int:
        return self.rows.size


def period_view(arrays: PanelArrays, k: int, quad: Quadrature, rows=None) -> PeriodView:
    base = np.arange(arrays.X.size) if rows is None else np.sort(np.asarray(rows))
    risk = base[arrays.X[base] >= k]
    pos_of = np.full(arrays.X.size, -1, dtype=np.int64)
    pos_of[risk] = np.arange(risk.size)
    off, qw = quad.nodes(k, arrays.X[risk])
    in_k = (arrays.ev_period == k)
    ev_pos = pos_of[arrays.ev_owner[in_k]]
    ev_off = arrays.ev_time[in_k] - k
    keep = ev_pos >= 0
    ev_pos, ev_off = ev_pos[keep], ev_off[keep]
    order = np.lexsort((ev_off, ev_pos))
    Xr = arrays.X[risk]
    died = arrays.death[risk] & (Xr < k + 1)
    death_pos = np.flatnonzero(died)
    return PeriodView(k, risk, off, qw, ev_pos[order], ev_off[order],
                      death_pos, Xr[death_pos] - k)


def period_views(arrays: PanelArrays, quad: Quadrature, rows=None) -> list:
    return [period_view(arrays, k, quad, rows) for k in range(arrays.K + 1)]


@dataclass
class PeriodSums:
    """Sums for one ``(k, m)``; ``S`` is per individual ``int Y w D dt``."""

    k: int
    S: np.ndarray
    A_lag: np.ndarray
    event: float
    death: float
    den_exposure: float  # int Y w D A[k-m] dt
    den_residual: float  # int Y w D^2 dt
    rho: float  # int Y w D rho dt
    w_min: float
    w_max: float
    n_capped: int
    n: int

    def blip_term(self, coef_prefix, A_recent: np.ndarray) -> float:
        """``sum_i (sum_{j<m} A[k-j] coef_j) S_i``; ``A_recent[:, j]`` is ``A[k-j]``."""
        if len(coef_prefix) == 0:
            return 0.0
        blip = A_recent[:, : len(coef_prefix)] @ np.asarray(coef_prefix, dtype=float)
        return float(blip @ self.S)


def recent_exposures(arrays: PanelArrays, rows: np.ndarray, k: int, m: int) -> np.ndarray:
    """``A[k], A[k-1], ..., A[k-m+1]`` for each row."""
    cols = [arrays.col(k - j) for j in range(m)]
    return arrays.A[np.ix_(rows, cols)] if cols else np.zeros((rows.size, 0))


def period_sums(arrays: PanelArrays, view: PeriodView, m: int, mu, alpha: AlphaWeights | None,
                rho=None) -> PeriodSums:
    k, rows = view.k, view.rows
    A_lag = arrays.A[rows, arrays.col(k - m)]
    c, s = log_weight_coefs(arrays.A[rows], arrays.M, k, m, alpha)

    def w_at(pos, off):
        raw = np.exp(c[pos] + s[pos] * off)
        return raw if alpha is None else alpha.apply_cap(raw)

    idx = np.arange(rows.size)
    wq_raw = np.exp(c[:, None] + s[:, None] * view.offsets)
    wq = wq_raw if alpha is None else alpha.apply_cap(wq_raw)
    D = A_lag[:, None] - mu.values(arrays, rows, view.offsets)
    base = view.qweights * wq * D
    S = base.sum(axis=1)

    event = 0.0
    if view.ev_pos.size:
        ev_rows = rows[view.ev_pos]
        mu_e = mu.values(arrays, ev_rows, view.ev_off[:, None])[:, 0]
        event = float(np.sum(w_at(view.ev_pos, view.ev_off) * (A_lag[view.ev_pos] - mu_e)))
    death = 0.0
    if view.death_pos.size:
        d_rows = rows[view.death_pos]
        mu_d = mu.values(arrays, d_rows, view.death_off[:, None])[:, 0]
        death = float(np.sum(w_at(view.death_pos, view.death_off) * (A_lag[view.death_pos] - mu_d)))
    rho_term = 0.0
    if rho is not None:
        rho_term = float(np.sum(base * rho.values(arrays, rows, view.offsets)))
    active = view.qweights > 0
    n_capped = 0 if alpha is None else alpha.n_capped(wq_raw[active])
    return PeriodSums(
        k=k, S=S, A_lag=A_lag, event=event, death=death,
        den_exposure=float(S @ A_lag), den_residual=float(np.sum(base * D)),
        rho=rho_term,
        w_min=float(wq[active].min()) if active.any() else 1.0,
        w_max=float(wq[active].max()) if active.any() else 1.0,
        n_capped=n_capped, n=idx.size)


def check_denominator(den: float, person_periods: int, what: str):
    if not np.isfinite(den):
        raise DegenerateDenominator(f"{what}: non-finite denominator {den}")
    if abs(den) < DENOMINATOR_TOL * max(person_periods, 1):
        raise DegenerateDenominator(
            f"{what}: denominator {den:.3e} below {DENOMINATOR_TOL:g} x {person_periods} person-periods")


def check_ratio(num: float, den: float, person_periods: int, what: str) -> float:
    check_denominator(den, person_periods, what)
    if not np.isfinite(num):
        raise DegenerateDenominator(f"{what}: non-finite numerator {num}")
    return num / den


@dataclass
class LagSolution:
    value: float
    numerator: float
    denominator: float
    person_periods: int


def solve_lag(arrays: PanelArrays, pairs, m: int, prefix, *, jump: str, denominator: str,
              what: str) -> LagSolution:
    """Pool ``(view, sums)`` pairs of lag ``m`` and solve for the lag's coefficient.

    ``prefix`` holds the already-estimated coefficients of lags ``0..m-1``;
    ``jump`` picks the event or death jumps and ``denominator`` the
    ``A[k-m]`` or residual form.  Pooling is over every pair (periods and, for
    cross-fitting, folds) before the single division.
    """
    num = 0.0
    den = 0.0
    pp = 0
    for view, ps in pairs:
        recent = recent_exposures(arrays, view.rows, view.k, m)
        jumps = ps.event if jump == "event" else ps.death
        num += jumps - ps.blip_term(prefix, recent) - ps.rho
        den += ps.den_exposure if denominator == "exposure" else ps.den_residual
        pp += ps.n
    return LagSolution(check_ratio(num, den, pp, what), num, den, pp)
