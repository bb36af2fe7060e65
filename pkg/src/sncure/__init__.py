"""Structural nested cumulative recurrent-event models.

Estimate how a time-varying exposure, and its recent history, shifts the
rate of a recurrent event in the presence of a terminal event.  Three
estimators share one interface: ``parametric`` (linear exposure models),
``nonparametric`` (learned exposure models) and ``robust`` (cross-fitted,
doubly robust).
"""
from .counterfactual import AvertedCurve, CapScenario, averted_ci, events_averted
from .data import Individual, Panel, PanelArrays, TimeGrid, at_risk, events_in, validate_panel
from .errors import (BootstrapFailure, DegenerateDenominator, DegenerateDesign, DimensionMismatch,
                     EmptyData, MissingHistory, OutOfWindow, SncureError, TooFewIndividuals,
                     ValidationError, WidthMismatch, ZeroVariance)
from .estimator import METHODS, EstimatorConfig
from .exposure import MuFit, build_pseudo_mu, eval_mu, fit_mu
from .inference import BootstrapResult, bootstrap, summarize
from .io import read_panel, write_panel
from .learners import Dataset, LearnerSpec, ensemble_spec, fit, predict
from .montecarlo import MonteCarloResult, run_replications
from .parametric import EffectEstimates, fit_parametric
from .quadrature import Quadrature
from .robust import FoldPlan, fit_robust, make_folds
from .simulation import SimConfig, simulate_study
from .terminal import AlphaWeights, estimate_alpha, no_alpha, weight

__all__ = [
    "AlphaWeights", "AvertedCurve", "BootstrapFailure", "BootstrapResult", "CapScenario",
    "Dataset", "DegenerateDenominator", "DegenerateDesign", "DimensionMismatch", "EffectEstimates",
    "EmptyData", "EstimatorConfig", "FoldPlan", "Individual", "LearnerSpec", "METHODS",
    "MissingHistory", "MonteCarloResult", "MuFit", "OutOfWindow", "Panel", "PanelArrays",
    "Quadrature", "SimConfig", "SncureError", "TimeGrid", "TooFewIndividuals", "ValidationError",
    "WidthMismatch", "ZeroVariance", "at_risk", "averted_ci", "bootstrap", "build_pseudo_mu",
    "ensemble_spec", "estimate_alpha", "eval_mu", "events_averted", "events_in", "fit",
    "fit_mu", "fit_parametric", "fit_robust", "make_folds", "no_alpha", "predict",
    "read_panel", "run_replications", "simulate_study", "summarize", "validate_panel",
    "weight", "write_panel",
]
