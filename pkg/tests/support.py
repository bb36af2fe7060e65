"""Builders shared across the test modules."""
import math

import numpy as np

from sncure.data import Individual, Panel
from sncure.exposure import FunctionalMu


def make_individual(id_, A, X, death=False, events=(), M=0, n_cov=1, cov_value=0.0):
    rows = math.floor(X) + M + 1
    rows = min(rows, len(A))
    cov = np.full((rows, n_cov), cov_value, dtype=float)
    return Individual(id_, np.asarray(A, dtype=float), cov, np.asarray(events, dtype=float),
                      float(X), bool(death))


def toy_panel(toy, n_cov=1):
    M, K = toy["M"], toy["K"]
    inds = []
    for i, p in enumerate(toy["people"]):
        rows = min(math.floor(p["X"]), K) + M + 1
        cov = (np.arange(rows * n_cov, dtype=float).reshape(rows, n_cov) + i) / 10.0
        inds.append(Individual(i, np.asarray(p["A"], dtype=float), cov,
                               np.asarray(p["events"], dtype=float), p["X"], p["death"]))
    return Panel(tuple(inds), M, K, toy["tau"])


def formula_model(formula, k, m, M, v=0):
    """Wrap a toy formula ``f(k, m, v, A_dict, u)`` as an exposure/outcome model."""

    def fn(arrays, rows, offsets):
        out = np.empty(offsets.shape)
        for a, r in enumerate(rows):
            A = {p: arrays.A[r, p + M] for p in range(-M, arrays.A.shape[1] - M)}
            for b, u in enumerate(offsets[a]):
                out[a, b] = formula(k, m, v, A, float(u))
        return out

    return FunctionalMu(k, m, fn, M)


def constant_model(value, k, m, M=0):
    return FunctionalMu(k, m, lambda arrays, rows, offsets: np.full(offsets.shape, value), M)
