"""Nonparametric bootstrap over individuals.

Each replicate draws ``n`` individuals with replacement (whole trajectories),
relabels the copies, and refits every nuisance and effect from scratch.
Replicate ``r`` uses its own random stream derived from ``(seed, r)``, so the
draws do not depend on execution order or on parallelism.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.stats import norm

from .data import Panel
from .errors import BootstrapFailure, DimensionMismatch, SncureError
from .parametric import EffectEstimates

log = logging.getLogger(__name__)

MAX_RETRIES = 3
MAX_EXCLUDED_FRACTION = 0.10


@dataclass
class BootstrapResult:
    replicates: np.ndarray  # (R_used, M+1)
    se: np.ndarray
    ci_level: float
    method: str
    point: EffectEstimates | None = None
    n_requested: int = 0
    n_excluded: int = 0
    retries: int = 0
    seed: int = 0
    failures: list = field(default_factory=list)

    @property
    def R(self) -> int:
        return self.replicates.shape[0]


def bootstrap_se(replicates: np.ndarray) -> np.ndarray:
    """``sqrt(R^-1 sum_r (b_r - mean)^2)`` per column."""
    reps = np.asarray(replicates, dtype=float)
    return np.sqrt(np.mean((reps - reps.mean(axis=0)) ** 2, axis=0))


def replicate_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(r)]))


def replicate_positions(n: int, seed: int, r: int, attempts: int = MAX_RETRIES + 1):
    """The resampling draws (and fit seeds) replicate ``r`` would use, in order."""
    rng = replicate_rng(seed, r)
    for _ in range(attempts):
        yield rng.integers(0, n, size=n), int(rng.integers(0, 2 ** 63 - 1))


def _one_replicate(panel: Panel, fit_fn: Callable, seed: int, r: int):
    errors = []
    for attempt, (pos, fit_seed) in enumerate(replicate_positions(panel.n, seed, r)):
        try:
            est = fit_fn(panel.resample(pos), fit_seed)
            return est.beta, attempt, errors
        except SncureError as exc:
            errors.append(f"replicate {r} attempt {attempt}: {type(exc).__name__}: {exc}")
    return None, MAX_RETRIES, errors


def bootstrap(panel: Panel, fit_fn: Callable, R: int, seed: int, ci_level: float = 0.95,
              point: EffectEstimates | None = None, threads: int = 1,
              progress: Callable | None = None) -> BootstrapResult:
    """Bootstrap ``fit_fn(panel, seed) -> EffectEstimates`` over individuals.

    Failing replicates are redrawn up to three times and then excluded; more
    than 10% exclusions raise :class:`BootstrapFailure`.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if not 0 < ci_level < 1:
        raise ValueError("ci_level must lie in (0, 1)")
    panel = panel.canonical()
    if point is None:
        point = fit_fn(panel, seed)
    if threads > 1:
        from joblib import Parallel, delayed
        outs = Parallel(n_jobs=threads)(
            delayed(_one_replicate)(panel, fit_fn, seed, r) for r in range(R))
    else:
        outs = []
        for r in range(R):
            outs.append(_one_replicate(panel, fit_fn, seed, r))
            if progress is not None:
                progress(r + 1, R)
    betas, failures, retries = [], [], 0
    for beta, attempts, errs in outs:
        failures.extend(errs)
        retries += attempts
        if beta is not None:
            betas.append(beta)
    excluded = R - len(betas)
    if excluded:
        log.warning("bootstrap: %d of %d replicates excluded after %d retries each",
                    excluded, R, MAX_RETRIES)
    if excluded > MAX_EXCLUDED_FRACTION * R:
        raise BootstrapFailure(f"{excluded} of {R} bootstrap replicates failed: "
                               + "; ".join(failures[-3:]))
    reps = np.vstack(betas)
    return BootstrapResult(reps, bootstrap_se(reps), ci_level, point.method, point, R,
                           excluded, retries, seed, failures)


def normal_quantile(level: float) -> float:
    return float(norm.ppf(0.5 + level / 2.0))


def summarize(result: BootstrapResult, point: EffectEstimates | None = None) -> EffectEstimates:
    """Attach bootstrap SEs and normal intervals ``beta +- z se`` to ``point``."""
    point = point if point is not None else result.point
    if point is None:
        raise ValueError("no point estimate to summarise")
    se = np.asarray(result.se, dtype=float)
    if se.shape != point.beta.shape:
        raise DimensionMismatch(f"{se.size} standard errors for {point.beta.size} coefficients")
    half = normal_quantile(result.ci_level) * se
    ci = np.column_stack([point.beta - half, point.beta + half])
    diag = dict(point.diagnostics)
    diag["bootstrap"] = {"R": result.n_requested, "used": result.R, "excluded": result.n_excluded,
                         "retries": result.retries, "seed": result.seed}
    return replace(point, se=se, ci=ci, ci_level=result.ci_level, diagnostics=diag)
