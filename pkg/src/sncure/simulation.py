"""Data-generating process for recurrent events with a correlated terminal event.

Each individual carries two AR(1) covariate series over periods ``-M..K``, an
exponential frailty ``Q``, and a continuous exposure that is either linear
(``simple``) or non-linear (``complex``) in the covariates.  Exposures are
min-max normalised to ``[0, 1]`` over every person-period of the study.  Within
a period all rates are constant, so every survival inversion is exact.

Rates per period ``k`` (``A`` normalised):

* recurrent events: ``sum_m A[k-m] beta[m] + c * Q * exp(L1 + L1**2 + L2 - 1)``
* death: ``sum_j A[k-j] alpha[j] + Q * exp(L1 + L2 - 1)``
* censoring: ``censor_scale * exp(L1 + L2 - 1)``
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import lfilter

from .data import Individual, Panel
from .errors import ZeroVariance

PILOT_PERSON_PERIODS = 10_000
_PILOT_ENTROPY = 0x5EED_C0DE
_EVENT_CHUNK = 16


@dataclass(frozen=True)
class SimConfig:
    n: int = 2000
    K: int = 30
    M: int = 4
    sigma1: float = 0.2
    sigma2: float = 1.0
    ar: float = 0.95
    frailty_mean: float = 0.2
    scenario: str = "simple"
    beta_true: tuple = (0.1, 0.05, 0.025, 0.0, 0.0)
    alpha_true: tuple = (0.02, 0.01)
    censor_scale: float = 0.2
    var_ratio: float = 100.0
    seed: int = 0
    c: float | None = None  # None -> calibrate from the study's own person-periods
    tau: float | None = None  # None -> K

    def __post_init__(self):
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        object.__setattr__(self, "alpha_true", tuple(float(a) for a in self.alpha_true))
        problems = []
        if self.n < 1:
            problems.append("n must be >= 1")
        if self.K < 0 or self.M < 0:
            problems.append("K and M must be >= 0")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            problems.append("sigma1 and sigma2 must be positive")
        if not 0 <= self.ar < 1:
            problems.append("ar must lie in [0, 1)")
        if self.frailty_mean < 0 or self.censor_scale < 0:
            problems.append("frailty_mean and censor_scale must be >= 0")
        if self.var_ratio <= 0:
            problems.append("var_ratio must be positive")
        if self.scenario not in ("simple", "complex"):
            problems.append("scenario must be 'simple' or 'complex'")
        if len(self.beta_true) != self.M + 1:
            problems.append("beta_true must have length M + 1")
        if len(self.alpha_true) > self.M + 1:
            problems.append("alpha_true must have length <= M + 1")
        if self.c is not None and self.c < 0:
            problems.append("c must be >= 0")
        if self.tau is not None and not (self.K <= self.tau < self.K + 1):
            problems.append("tau must satisfy floor(tau) == K")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def horizon(self) -> float:
        return float(self.K if self.tau is None else self.tau)

    @property
    def n_periods(self) -> int:
        return self.M + self.K + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta_true"] = list(self.beta_true)
        d["alpha_true"] = list(self.alpha_true)
        return d


@dataclass(frozen=True)
class Normalization:
    lo: float
    hi: float

    @property
    def scale(self) -> float:
        return self.hi - self.lo

    def apply(self, raw):
        return (np.asarray(raw) - self.lo) / self.scale


# ---------------------------------------------------------------------------
# building blocks

def sim_covariates(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Two independent stationary Gaussian AR(1) series over periods ``-M..K``.

    Returns an array of shape ``(M + K + 1, 2)``.
    """
    eps = rng.standard_normal((config.n_periods, 2))
    sig = np.array([config.sigma1, config.sigma2])
    innov = eps * sig * math.sqrt(1.0 - config.ar ** 2)
    innov[0] = eps[0] * sig
    return lfilter([1.0], [1.0, -config.ar], innov, axis=0)


def exposure_mean(scenario: str, covariates: np.ndarray) -> np.ndarray:
    """Raw (pre-normalisation) conditional mean of the exposure given ``L``."""
    L1, L2 = covariates[..., 0], covariates[..., 1]
    if scenario == "simple":
        return L1 + 0.5 * L2
    if scenario == "complex":
        return 2.0 * L1 ** 2 + 2.0 * L1 * np.abs(L2 - 1.0)
    raise ValueError(f"unknown scenario {scenario!r}")


def raw_exposures(config: SimConfig, covariates: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    mean = exposure_mean(config.scenario, covariates)
    return mean + rng.standard_normal(mean.shape)


def normalize_exposures(raw: np.ndarray):
    """Global min-max normalisation; returns ``(normalised, Normalization)``."""
    lo, hi = float(np.min(raw)), float(np.max(raw))
    if hi <= lo:
        raise ZeroVariance("exposures are constant; cannot normalise")
    norm = Normalization(lo, hi)
    return norm.apply(raw), norm


def sim_exposures(config: SimConfig, covariates: np.ndarray, rng: np.random.Generator):
    """Draw exposures for a stack of covariate series and normalise them jointly.

    ``covariates`` has shape ``(..., n_periods, 2)``.  Returns the normalised
    exposures and the :class:`Normalization` used.
    """
    return normalize_exposures(raw_exposures(config, covariates, rng))


def exposure_effect(A: np.ndarray, beta, M: int) -> np.ndarray:
    """``sum_m A[k-m] beta[m]`` for study periods ``k = 0..K``.

    ``A`` has periods ``-M..K`` along its last axis.
    """
    K = A.shape[-1] - M - 1
    out = np.zeros(A.shape[:-1] + (K + 1,))
    for m, b in enumerate(beta):
        if b != 0.0:
            out += b * A[..., M - m: M - m + K + 1]
    return out


def baseline_intensity(Q, L) -> np.ndarray:
    """``Q * exp(L1 + L1**2 + L2 - 1)`` per period."""
    L1, L2 = L[..., 0], L[..., 1]
    return np.asarray(Q)[..., None] * np.exp(L1 + L1 ** 2 + L2 - 1.0)


def calibrate_c(effect: np.ndarray, eta: np.ndarray, var_ratio: float = 100.0) -> float:
    """Scale ``c`` with ``Var(c * eta) / Var(effect) = var_ratio`` over a pilot."""
    sd_eta = float(np.std(eta))
    sd_eff = float(np.std(effect))
    if not sd_eta > 0:
        raise ZeroVariance("baseline intensity has zero variance in the pilot")
    return math.sqrt(var_ratio) * sd_eff / sd_eta


def variance_ratio(effect: np.ndarray, eta: np.ndarray, c: float) -> float:
    return float(np.var(c * eta) / np.var(effect))


# ---------------------------------------------------------------------------
# survival inversion

def invert_cumulative_hazard(rates, targets, horizon: float) -> np.ndarray:
    """Solve ``int_0^t lambda(v) dv = target`` for piecewise-constant ``lambda``.

    ``rates[k]`` applies on ``[k, k + 1)``.  Targets beyond the cumulative
    hazard at ``horizon`` map to ``inf``.
    """
    rates = np.asarray(rates, dtype=float)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    n_full = int(math.floor(horizon))
    widths = np.ones(rates.size)
    widths[n_full + 1:] = 0.0
    if n_full < rates.size:
        widths[n_full] = horizon - n_full
    cum = np.concatenate([[0.0], np.cumsum(rates * widths)])
    out = np.full(targets.shape, np.inf)
    inside = targets < cum[-1]
    if np.any(inside):
        k = np.searchsorted(cum, targets[inside], side="right") - 1
        k = np.minimum(k, rates.size - 1)
        out[inside] = k + (targets[inside] - cum[k]) / rates[k]
    return out


def sim_event_times(rates, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Recurrent event times on ``[0, horizon]`` by repeated survivor inversion.

    Each gap solves ``U = exp(-int_{T_{j-1}}^{t} lambda)`` which, accumulated,
    is ``Lambda(T_j) = E_1 + ... + E_j`` with ``E ~ Exp(1)``.
    """
    rates = np.asarray(rates, dtype=float)
    n_full = int(math.floor(horizon))
    total = float(np.sum(rates[:n_full])) + (
        rates[n_full] * (horizon - n_full) if n_full < rates.size else 0.0)
    if total <= 0:
        return np.empty(0)
    gaps = []
    acc = 0.0
    while acc < total:
        chunk = rng.standard_exponential(_EVENT_CHUNK)
        gaps.append(chunk)
        acc += float(chunk.sum())
    cum = np.cumsum(np.concatenate(gaps))
    cum = cum[cum < total]
    return invert_cumulative_hazard(rates, cum, horizon)


# ---------------------------------------------------------------------------
# full study

@dataclass
class StudyDraw:
    """Person-level latent draws kept alongside the assembled panel."""

    L: np.ndarray
    Q: np.ndarray
    A: np.ndarray
    norm: Normalization
    c: float
    extras: dict = field(default_factory=dict)


def _individual_streams(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _draw_latents(config: SimConfig, rngs):
    L = np.stack([sim_covariates(config, g) for g in rngs])
    Q = np.array([g.exponential(config.frailty_mean) if config.frailty_mean > 0 else 0.0
                  for g in rngs])
    raw = np.stack([raw_exposures(config, L[i], g) for i, g in enumerate(rngs)])
    return L, Q, raw


def simulate_draws(config: SimConfig) -> tuple[Panel, StudyDraw]:
    """Simulate one study; also return the latent draws (for oracles and checks)."""
    M, K = config.M, config.K
    tau = config.horizon
    rngs = _individual_streams(config.seed, config.n)
    L, Q, raw = _draw_latents(config, rngs)
    A, norm = normalize_exposures(raw)
    Ls = L[:, M:]  # periods 0..K

    effect = exposure_effect(A, config.beta_true, M)
    eta = baseline_intensity(Q, Ls)
    if config.c is not None:
        c = float(config.c)
    else:
        pe, pt = effect.ravel(), eta.ravel()
        short = PILOT_PERSON_PERIODS - pe.size
        if short > 0:
            extra = math.ceil(short / (K + 1))
            prngs = _individual_streams(config.seed ^ _PILOT_ENTROPY, extra)
            pL, pQ, praw = _draw_latents(config, prngs)
            pe = np.concatenate([pe, exposure_effect(norm.apply(praw), config.beta_true, M).ravel()])
            pt = np.concatenate([pt, baseline_intensity(pQ, pL[:, M:]).ravel()])
        c = calibrate_c(pe, pt, config.var_ratio)

    event_rate = effect + c * eta
    alpha = np.zeros(M + 1)
    alpha[: len(config.alpha_true)] = config.alpha_true
    death_rate = exposure_effect(A, alpha, M) + Q[:, None] * np.exp(Ls[..., 0] + Ls[..., 1] - 1.0)
    censor_rate = config.censor_scale * np.exp(Ls[..., 0] + Ls[..., 1] - 1.0)

    individuals = []
    for i, g in enumerate(rngs):
        e_death, e_cens = g.standard_exponential(2)
        D = invert_cumulative_hazard(death_rate[i], e_death, tau)[0]
        C = invert_cumulative_hazard(censor_rate[i], e_cens, tau)[0]
        X = min(D, C, tau)
        died = bool(D <= C and D <= tau)
        events = sim_event_times(event_rate[i], X, g)
        n_cov = int(math.floor(X)) + M + 1
        individuals.append(Individual(
            id=i, exposures=A[i], covariates=L[i, :n_cov], event_times=events,
            x_time=X, death_observed=died))

    meta = {
        "simulation": config.to_dict(),
        "c": c,
        "normalization": {"lo": norm.lo, "hi": norm.hi},
        "variance_ratio": variance_ratio(effect, eta, c) if np.var(effect) > 0 else None,
    }
    panel = Panel(tuple(individuals), M, K, tau, metadata=meta)
    return panel, StudyDraw(L=L, Q=Q, A=A, norm=norm, c=c,
                            extras={"effect": effect, "eta": eta})


def simulate_study(config: SimConfig) -> Panel:
    """Simulate one study and return its observed panel."""
    return simulate_draws(config)[0]
