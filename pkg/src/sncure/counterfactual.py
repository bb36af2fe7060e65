"""Expected recurrent events averted by capping exposure at ``a``.

Averted events over observed at-risk time only:

    sum_i sum_k int_k^{k+1} Y_i(t) sum_m (A[k-m] - min(A[k-m], a)) beta_m dt

The integrand is constant within a period, so each period contributes its
at-risk length (up to ``min(X, t_end)``) times the capped-away blip.  Survival
is not extended under the intervention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Panel
from .inference import BootstrapResult, normal_quantile
from .parametric import EffectEstimates

AT_RISK_NOTE = ("averted events are counted over the observed at-risk time; "
                "lifetimes are not extended under the intervention")


@dataclass(frozen=True)
class CapScenario:
    cap: float
    label: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.cap) and self.cap > 0):
            raise ValueError("cap must be finite and positive")
        if not self.label:
            object.__setattr__(self, "label", f"cap={self.cap:g}")


@dataclass(frozen=True)
class AvertedCurve:
    periods: np.ndarray
    cumulative: np.ndarray
    total: float


def _beta(beta) -> np.ndarray:
    return np.asarray(beta.beta if isinstance(beta, EffectEstimates) else beta, dtype=float)


def _period_averted(panel: Panel, beta: np.ndarray, cap: float, t_end: float) -> np.ndarray:
    arrays = panel.arrays
    M, K = panel.M, panel.K
    if beta.size - 1 > M:
        raise ValueError(f"{beta.size} lags exceed the baseline window M={M}")
    ks = np.arange(K + 1)
    end = np.minimum(np.minimum(arrays.X, t_end)[:, None], ks[None, :] + 1.0)
    length = np.clip(end - ks[None, :], 0.0, None)  # (n, K+1)
    excess = arrays.A - np.minimum(arrays.A, cap)  # (n, M+K+1)
    blip = np.zeros_like(length)
    for m, b in enumerate(beta):
        if b != 0.0:
            blip += b * excess[:, M - m: M - m + K + 1]
    return (length * blip).sum(axis=0)


def events_averted(panel: Panel, beta, cap: CapScenario, t_end: float | None = None):
    """Total averted events by ``t_end`` and the cumulative curve over periods."""
    t_end = panel.tau if t_end is None else float(t_end)
    if t_end > panel.tau:
        raise ValueError("t_end exceeds the study horizon")
    cum = np.cumsum(_period_averted(panel, _beta(beta), cap.cap, t_end))
    total = float(cum[-1])
    return total, AvertedCurve(np.arange(cum.size), cum, total)


def averted_curves_bootstrap(panel: Panel, boot: BootstrapResult, cap: CapScenario,
                             t_end: float | None = None) -> np.ndarray:
    """Cumulative curve for every bootstrap replicate's ``beta``, on the original panel."""
    return np.vstack([events_averted(panel, b, cap, t_end)[1].cumulative
                      for b in boot.replicates])


def averted_ci(panel: Panel, boot: BootstrapResult, cap: CapScenario, t_end: float | None = None,
               level: float | None = None, point=None):
    """Normal interval for the averted total from the replicate spread.

    Centred on the averted total under ``point`` (default: the bootstrap's
    original-panel estimate, else the replicate mean).
    """
    level = boot.ci_level if level is None else level
    totals = np.array([events_averted(panel, b, cap, t_end)[0] for b in boot.replicates])
    sd = float(np.sqrt(np.mean((totals - totals.mean()) ** 2)))
    if point is None and boot.point is not None:
        point = boot.point
    centre = events_averted(panel, point, cap, t_end)[0] if point is not None else float(totals.mean())
    half = normal_quantile(level) * sd
    return centre - half, centre + half


def averted_curve_ci(panel: Panel, beta, boot: BootstrapResult | None, cap: CapScenario,
                     t_end: float | None = None, level: float = 0.95):
    """Rows ``(period, cumulative, lo, hi)``; bounds are NaN without replicates."""
    _, curve = events_averted(panel, beta, cap, t_end)
    if boot is None or boot.R == 0:
        lo = hi = np.full(curve.cumulative.shape, np.nan)
    else:
        reps = averted_curves_bootstrap(panel, boot, cap, t_end)
        sd = np.sqrt(np.mean((reps - reps.mean(axis=0)) ** 2, axis=0))
        half = normal_quantile(level) * sd
        lo, hi = curve.cumulative - half, curve.cumulative + half
    return np.column_stack([curve.periods, curve.cumulative, lo, hi])
