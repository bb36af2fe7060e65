"""One configuration object for the three estimators, shared by the bootstrap,
the Monte Carlo harness and the command line."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .data import Panel, TimeGrid
from .learners import LearnerSpec, ensemble_spec
from .parametric import DEFAULT_MIN_RISK_SET, EffectEstimates, fit_parametric
from .quadrature import Quadrature
from .robust import fit_robust

METHODS = ("parametric", "nonparametric", "robust")


@dataclass(frozen=True)
class EstimatorConfig:
    """How to estimate ``beta``.

    ``learner`` is the nuisance learner for the ``nonparametric`` exposure
    models and for both robust nuisances (default: the stacking ensemble); the
    ``parametric`` method always uses weighted least squares.
    """

    method: str = "parametric"
    M_lags: int | None = None
    bins_per_period: int = 5
    quadrature: str = "midpoint"
    V: int = 5
    learner: LearnerSpec | None = None
    rho_learner: LearnerSpec | None = None
    min_risk_set: int = DEFAULT_MIN_RISK_SET
    weight_cap: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.M_lags is not None and self.M_lags < 0:
            raise ValueError("M_lags must be >= 0")
        if self.V < 2:
            raise ValueError("V must be >= 2")
        if self.min_risk_set < 0:
            raise ValueError("min_risk_set must be >= 0")
        Quadrature(TimeGrid(self.bins_per_period), self.quadrature)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.bins_per_period)

    @property
    def quad(self) -> Quadrature:
        return Quadrature(self.grid, self.quadrature)

    def nuisance_learner(self) -> LearnerSpec:
        return self.learner or ensemble_spec()

    def fit(self, panel: Panel, seed: int = 0) -> EffectEstimates:
        common = dict(quadrature=self.quad, min_risk_set=self.min_risk_set,
                      weight_cap=self.weight_cap)
        if self.method == "robust":
            learner = self.nuisance_learner()
            return fit_robust(panel, self.grid, self.V, seed, learner,
                              self.rho_learner or learner, None, self.M_lags, **common)
        if self.method == "nonparametric":
            return fit_parametric(panel, self.grid, "nonparametric", self.nuisance_learner(),
                                  None, self.M_lags, **common)
        return fit_parametric(panel, self.grid, "parametric", None, None, self.M_lags, **common)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["learner"] = None if self.method == "parametric" else self.nuisance_learner().to_dict()
        d["rho_learner"] = None if self.rho_learner is None else self.rho_learner.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorConfig":
        d = dict(d)
        for key in ("learner", "rho_learner"):
            if d.get(key) is not None and not isinstance(d[key], LearnerSpec):
                d[key] = LearnerSpec.from_dict(d[key])
        return cls(**d)
