"""Terminal-event exposure effects ``alpha`` and the risk-set weights they induce.

The weight for lag ``m`` re-weights survivors so that the observed risk set at
``t`` in period ``k`` looks like the one that would have been seen had
exposures ``A[k-m+1..k]`` been zero::

    log w_km(t) = sum_{j<m} A[k-j] * (alpha_0 + ... + alpha_{j-1} + alpha_j (t - k))

which is ``c + s (t - k)`` per individual, so weights are log-linear in time
within a period.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Individual, TimeGrid


@dataclass(frozen=True, eq=False)
class AlphaWeights:
    alpha: np.ndarray
    provenance: str = ""
    weight_cap: float | None = None

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if not np.all(np.isfinite(a)):
            raise ValueError("alpha entries must be finite")
        object.__setattr__(self, "alpha", a)
        if self.weight_cap is not None and not self.weight_cap >= 1:
            raise ValueError("weight_cap must be >= 1")

    def __len__(self):
        return self.alpha.size

    def prefix(self, m: int) -> np.ndarray:
        if m > self.alpha.size:
            raise ValueError(f"weights at lag {m} need alpha_0..alpha_{m - 1}, have {self.alpha.size}")
        return self.alpha[:m]

    def apply_cap(self, w: np.ndarray) -> np.ndarray:
        if self.weight_cap is None:
            return w
        return np.clip(w, 1.0 / self.weight_cap, self.weight_cap)

    def n_capped(self, w: np.ndarray) -> int:
        if self.weight_cap is None:
            return 0
        return int(np.count_nonzero((w > self.weight_cap) | (w < 1.0 / self.weight_cap)))

    def extended(self, value: float) -> "AlphaWeights":
        return AlphaWeights(np.append(self.alpha, value), self.provenance, self.weight_cap)


def no_alpha(weight_cap=None) -> AlphaWeights:
    return AlphaWeights(np.zeros(0), "empty", weight_cap)


def log_weight_coefs(A: np.ndarray, M: int, k: int, m: int, alpha: AlphaWeights | None):
    """Per-row intercept ``c`` and slope ``s`` of ``log w_km(k + u) = c + s u``.

    ``A`` holds exposure rows covering periods ``-M..``.
    """
    n = A.shape[0]
    c = np.zeros(n)
    s = np.zeros(n)
    if m == 0:
        return c, s
    a = alpha.prefix(m)
    cum = np.concatenate([[0.0], np.cumsum(a)])  # cum[j] = alpha_0 + ... + alpha_{j-1}
    for j in range(m):
        Aj = A[:, k - j + M]
        c += Aj * cum[j]
        s += Aj * a[j]
    return c, s


def weight(ind: Individual, k: int, m: int, t: float, alpha: AlphaWeights, M: int) -> float:
    """``w_km(t)`` for one individual whose exposures start at period ``-M``."""
    if not k <= t < k + 1:
        raise ValueError(f"t={t} outside period [{k}, {k + 1})")
    if m == 0:
        return 1.0
    c, s = log_weight_coefs(ind.exposures[None, :], M, k, m, alpha)
    return float(alpha.apply_cap(np.array([math.exp(c[0] + s[0] * (t - k))]))[0])


@dataclass
class AlphaFit:
    weights: AlphaWeights
    numerators: list = field(default_factory=list)
    denominators: list = field(default_factory=list)


def estimate_alpha(panel, mu_fits: dict, grid: TimeGrid = TimeGrid(), quadrature=None,
                   M_lags: int | None = None,
                   weight_cap: float | None = None) -> AlphaWeights:
    """Solve ``alpha_0..alpha_{M_lags}`` in sequence from given exposure models.

    ``mu_fits`` maps ``(k, m)`` to an :class:`ExposureModel`; periods without a
    model do not contribute.  Weights for lag ``m`` use the ``alpha`` values
    already solved for lags ``< m``.
    """
    from .equations import period_sums, period_views, solve_lag
    from .quadrature import Quadrature

    panel = panel.canonical()
    arrays = panel.arrays
    if M_lags is None:
        M_lags = max(m for _, m in mu_fits)
    quad = quadrature or Quadrature(grid)
    views = period_views(arrays, quad)
    cur = no_alpha(weight_cap)
    for m in range(M_lags + 1):
        pairs = [(views[k], period_sums(arrays, views[k], m, mu_fits[(k, mm)], cur))
                 for (k, mm) in sorted(mu_fits) if mm == m and views[k].n > 0]
        sol = solve_lag(arrays, pairs, m, cur.alpha, jump="death", denominator="exposure",
                        what=f"alpha_{m}")
        cur = cur.extended(sol.value)
    return AlphaWeights(cur.alpha, "given exposure models", weight_cap)
