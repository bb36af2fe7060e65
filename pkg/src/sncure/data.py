"""Longitudinal recurrent-event panels, counting processes and time grids.

Periods are left-closed, right-open: period ``k`` covers ``[k, k + 1)``, so an
event at exactly ``t = k`` belongs to period ``k``.  Array column ``j`` of an
exposure or covariate series holds period ``j - M``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class Individual:
    """One trajectory: exposures, covariates, recurrent events and exit time.

    ``exposures`` covers periods ``-M..K`` (exposure is external and known even
    after death); ``covariates`` has one row per period ``-M..floor(x_time)``.
    """

    id: Any
    exposures: np.ndarray
    covariates: np.ndarray
    event_times: np.ndarray
    x_time: float
    death_observed: bool

    def __post_init__(self):
        object.__setattr__(self, "exposures", np.asarray(self.exposures, dtype=float))
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(-1, 1)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "event_times", np.asarray(self.event_times, dtype=float).ravel())
        object.__setattr__(self, "x_time", float(self.x_time))
        object.__setattr__(self, "death_observed", bool(self.death_observed))

    @property
    def n_events(self) -> int:
        return int(self.event_times.size)


@dataclass(frozen=True, eq=False)
class Panel:
    """An immutable cohort of individuals sharing ``M``, ``K`` and ``tau``."""

    individuals: tuple
    baseline_len: int
    horizon: int
    tau: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "individuals", tuple(self.individuals))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def M(self) -> int:
        return self.baseline_len

    @property
    def K(self) -> int:
        return self.horizon

    @property
    def n(self) -> int:
        return len(self.individuals)

    @property
    def n_covariates(self) -> int:
        if not self.individuals:
            return 0
        return self.individuals[0].covariates.shape[1]

    def __len__(self):
        return self.n

    def __iter__(self):
        return iter(self.individuals)

    # -- derived views ---------------------------------------------------
    def subset(self, positions: Sequence[int]) -> "Panel":
        return replace(self, individuals=tuple(self.individuals[i] for i in positions))

    def resample(self, positions: Sequence[int]) -> "Panel":
        """Draw individuals by position; copies are relabelled ``0..len-1``."""
        inds = tuple(replace(self.individuals[p], id=j) for j, p in enumerate(positions))
        return replace(self, individuals=inds)

    def canonical(self) -> "Panel":
        """Return the panel ordered by id, so that results never depend on input order."""
        order = sorted(range(self.n), key=lambda i: _id_key(self.individuals[i].id))
        if order == list(range(self.n)):
            return self
        return self.subset(order)

    @cached_property
    def arrays(self) -> "PanelArrays":
        return PanelArrays.from_panel(self)


def _id_key(v):
    return (type(v).__name__, v)


@dataclass(frozen=True, eq=False)
class PanelArrays:
    """Dense column-stacked copy of a panel used by the vectorised estimators.

    ``L`` is NaN for periods after ``floor(X)``.  Events are stored flat, grouped
    by owner and sorted in time within owner.
    """

    A: np.ndarray  # (n, M+K+1)
    L: np.ndarray  # (n, M+K+1, p)
    X: np.ndarray
    death: np.ndarray
    ev_time: np.ndarray
    ev_owner: np.ndarray
    M: int
    K: int

    @classmethod
    def from_panel(cls, panel: Panel) -> "PanelArrays":
        n, M, K, p = panel.n, panel.M, panel.K, panel.n_covariates
        width = M + K + 1
        A = np.zeros((n, width))
        L = np.full((n, width, p), np.nan)
        X = np.empty(n)
        death = np.zeros(n, dtype=bool)
        times, owners = [], []
        for i, ind in enumerate(panel.individuals):
            A[i] = ind.exposures[:width]
            rows = min(ind.covariates.shape[0], width)
            L[i, :rows] = ind.covariates[:rows]
            X[i] = ind.x_time
            death[i] = ind.death_observed
            times.append(ind.event_times)
            owners.append(np.full(ind.event_times.size, i, dtype=np.int64))
        ev_time = np.concatenate(times) if times else np.empty(0)
        ev_owner = np.concatenate(owners) if owners else np.empty(0, dtype=np.int64)
        return cls(A, L, X, death, ev_time, ev_owner, M, K)

    def col(self, k: int) -> int:
        """Array column holding period ``k``."""
        return k + self.M

    @cached_property
    def ev_period(self) -> np.ndarray:
        return np.floor(self.ev_time).astype(np.int64)


@dataclass(frozen=True)
class TimeGrid:
    """``bins_per_period`` equal bins per unit period, evaluated at their midpoints."""

    bins_per_period: int = 5

    def __post_init__(self):
        if int(self.bins_per_period) < 1:
            raise ValueError("bins_per_period must be >= 1")

    @property
    def width(self) -> float:
        return 1.0 / self.bins_per_period

    @property
    def offsets(self) -> np.ndarray:
        """Midpoint offsets ``t - k`` inside any period."""
        return (np.arange(self.bins_per_period) + 0.5) / self.bins_per_period

    def midpoints(self, k: int) -> np.ndarray:
        return k + self.offsets


# ---------------------------------------------------------------------------
# counting processes

def at_risk(ind: Individual, t: float) -> int:
    """Left-continuous at-risk indicator ``I(X >= t)``."""
    return int(ind.x_time >= t)


def events_in(ind: Individual, a: float, b: float):
    """Count and times of recurrent events in ``[a, b)``."""
    if not 0 <= a < b:
        raise ValueError("need 0 <= a < b")
    t = ind.event_times
    sel = t[(t >= a) & (t < b)]
    return int(sel.size), sel


# ---------------------------------------------------------------------------
# validation

@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def raise_if_failed(self):
        if self.violations:
            head = "; ".join(self.violations[:5])
            more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
            raise ValidationError(f"panel validation failed: {head}{more}", self.violations)


def validate_panel(panel: Panel) -> ValidationReport:
    """Check every panel invariant and report all violations found."""
    out = []
    M, K, tau = panel.M, panel.K, panel.tau
    if M < 0:
        out.append(f"baseline length M={M} is negative")
    if not tau > 0:
        out.append(f"tau={tau} is not positive")
    elif K != math.floor(tau):
        out.append(f"horizon K={K} differs from floor(tau)={math.floor(tau)}")
    width = M + K + 1
    p = None
    for ind in panel.individuals:
        tag = f"individual {ind.id!r}"
        X = ind.x_time
        if not np.isfinite(X) or X <= 0:
            out.append(f"{tag}: X={X} not after study start")
            continue
        if X > tau:
            out.append(f"{tag}: X={X} exceeds tau={tau}")
        ex = ind.exposures
        if ex.size < width:
            out.append(f"{tag}: exposure series incomplete ({ex.size} of {width} periods)")
        elif ex.size > width:
            out.append(f"{tag}: exposure series has {ex.size} periods, expected {width}")
        if not np.all(np.isfinite(ex)):
            out.append(f"{tag}: non-finite exposure")
        cov = ind.covariates
        if p is None:
            p = cov.shape[1]
        elif cov.shape[1] != p:
            out.append(f"{tag}: covariate width {cov.shape[1]} differs from {p}")
        need = min(math.floor(X), K) + M + 1
        if cov.shape[0] > need:
            out.append(f"{tag}: covariate rows past floor(X)")
        elif cov.shape[0] < need:
            out.append(f"{tag}: covariate series incomplete ({cov.shape[0]} of {need} rows)")
        if not np.all(np.isfinite(cov)):
            out.append(f"{tag}: non-finite covariate")
        t = ind.event_times
        if t.size:
            if np.any(np.diff(t) <= 0):
                out.append(f"{tag}: unsorted events")
            if t[0] <= 0:
                out.append(f"{tag}: event at or before t=0")
            if t[-1] > X:
                out.append(f"{tag}: event after X")
    return ValidationReport(out)
