"""Replication harness: simulate many studies, fit each estimator, bootstrap,
and summarise bias, standard error and coverage per lag."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import SncureError
from .estimator import EstimatorConfig
from .inference import bootstrap, normal_quantile
from .simulation import SimConfig, simulate_study

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("estimator", "lag", "sqrtn_bias", "se_x100", "coverage")


def study_seed(seed: int, r: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(r), 0x51]).generate_state(1)[0])


def fit_seed(seed: int, r: int, j: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(r), 0xF17, int(j)]).generate_state(1)[0])


@dataclass
class EstimatorRuns:
    name: str
    config: EstimatorConfig
    beta: list = field(default_factory=list)  # per replicate
    se: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    def arrays(self):
        b = np.array(self.beta, dtype=float)
        s = np.array(self.se, dtype=float) if self.se else None
        return b, s


@dataclass
class MonteCarloResult:
    sim: SimConfig
    reps: int
    R: int
    ci_level: float
    runs: dict
    truth: np.ndarray

    def summary(self) -> list:
        """Rows ``(estimator, lag, sqrtn_bias, se_x100, coverage)``."""
        rows = []
        z = normal_quantile(self.ci_level)
        n = self.sim.n
        for name, run in self.runs.items():
            b, s = run.arrays()
            if b.size == 0:
                continue
            for m in range(b.shape[1]):
                bias = math.sqrt(n) * (b[:, m].mean() - self.truth[m])
                if s is not None and s.size:
                    se100 = 100 * s[:, m].mean()
                    cover = float(np.mean(np.abs(b[:, m] - self.truth[m]) <= z * s[:, m]))
                else:
                    se100, cover = math.nan, math.nan
                rows.append((name, m, bias, se100, cover))
        return rows

    def empirical_sd(self, name: str) -> np.ndarray:
        b, _ = self.runs[name].arrays()
        return b.std(axis=0, ddof=1)

    def mean_se(self, name: str) -> np.ndarray:
        _, s = self.runs[name].arrays()
        return s.mean(axis=0)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for name, m, bias, se100, cover in self.summary():
                w.writerow([name, m, format(bias, ".6g"), format(se100, ".6g"), format(cover, ".6g")])


def run_replications(sim: SimConfig, estimators: dict, reps: int, R: int, seed: int,
                     ci_level: float = 0.95, threads: int = 1,
                     progress: Callable | None = None) -> MonteCarloResult:
    """Simulate ``reps`` studies from ``sim`` and run every estimator on each.

    Every estimator sees the same simulated studies.  With ``R > 0`` each fit
    is bootstrapped ``R`` times; study, fold and bootstrap seeds all derive
    from ``(seed, replicate)``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    runs = {name: EstimatorRuns(name, cfg) for name, cfg in estimators.items()}
    M_lags = {name: (sim.M if cfg.M_lags is None else cfg.M_lags) for name, cfg in estimators.items()}
    truth = np.zeros(sim.M + 1)
    truth[: len(sim.beta_true)] = sim.beta_true[: sim.M + 1]
    for r in range(reps):
        panel = simulate_study(replace(sim, seed=study_seed(seed, r)))
        for j, (name, cfg) in enumerate(estimators.items()):
            run = runs[name]
            t0 = time.perf_counter()
            fseed = fit_seed(seed, r, j)
            fit = lambda p, s, cfg=cfg: cfg.fit(p, s)  # noqa: E731
            try:
                point = cfg.fit(panel, fseed)
                if R > 0:
                    boot = bootstrap(panel, fit, R, fseed, ci_level, point=point, threads=threads)
                    run.se.append(boot.se)
                run.beta.append(point.beta)
            except SncureError as exc:
                run.failures.append(f"replicate {r}: {type(exc).__name__}: {exc}")
                log.warning("%s replicate %d failed: %s", name, r, exc)
            run.seconds += time.perf_counter() - t0
        if progress is not None:
            progress(r + 1, reps)
    return MonteCarloResult(sim, reps, R, ci_level, runs, truth[: max(M_lags.values()) + 1])
