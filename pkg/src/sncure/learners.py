"""Weighted regression learners used for every nuisance fit.

Three learner kinds share one interface, :func:`fit` then :func:`predict`:

``linear``
    Weighted least squares with intercept, solved through ridge-jittered normal
    equations on weighted-centred features.
``gbt``
    Squared-error gradient boosting of depth-limited trees grown with exact
    greedy splits (no subsampling, so fits are deterministic).
``ensemble``
    Members combined with non-negative weights summing to one that minimise the
    V-fold cross-validated weighted MSE.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import _trees
from .errors import DegenerateDesign, EmptyData, WidthMismatch

RIDGE_JITTER = 1e-9
SIMPLEX_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, targets and non-negative weights.

    ``groups`` optionally labels rows that must stay in the same CV fold (the
    pseudo-data copies of one individual).
    """

    features: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    groups: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.targets, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "weights", w)
        if self.groups is not None:
            object.__setattr__(self, "groups", np.asarray(self.groups).ravel())
        if X.shape[0] == 0:
            raise EmptyData("dataset has no rows")
        if y.size != X.shape[0] or w.size != X.shape[0]:
            raise ValueError("features, targets and weights have inconsistent lengths")
        if self.groups is not None and self.groups.size != X.shape[0]:
            raise ValueError("groups length does not match rows")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and non-negative")
        if not np.any(w > 0):
            raise EmptyData("all weights are zero")

    @property
    def n(self) -> int:
        return self.targets.size

    def take(self, rows) -> "Dataset":
        g = None if self.groups is None else self.groups[rows]
        return Dataset(self.features[rows], self.targets[rows], self.weights[rows], g)

    def positive(self) -> "Dataset":
        """Drop zero-weight rows; they cannot influence any fit."""
        keep = self.weights > 0
        return self if keep.all() else self.take(keep)


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "linear"
    rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 5
    members: tuple = ()
    cv_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("linear", "gbt", "ensemble"):
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.kind == "ensemble":
            if self.cv_folds < 2:
                raise ValueError("ensemble needs cv_folds >= 2")
            members = tuple(self.members) or default_members()
            if any(m.kind == "ensemble" for m in members):
                raise ValueError("ensembles cannot be nested")
            object.__setattr__(self, "members", members)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "gbt":
            d.update(rounds=self.rounds, learning_rate=self.learning_rate,
                     max_depth=self.max_depth, min_samples_leaf=self.min_samples_leaf)
        elif self.kind == "ensemble":
            d.update(cv_folds=self.cv_folds, seed=self.seed,
                     members=[m.to_dict() for m in self.members])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerSpec":
        d = dict(d)
        if "members" in d:
            d["members"] = tuple(cls.from_dict(m) for m in d["members"])
        return cls(**d)


def default_members() -> tuple:
    """Linear member plus boosted trees over rounds {50, 200} x rate {0.01, 0.1}, depth 3."""
    gbts = tuple(LearnerSpec("gbt", rounds=r, learning_rate=lr, max_depth=3)
                 for lr in (0.01, 0.1) for r in (50, 200))
    return (LearnerSpec("linear"),) + gbts


def ensemble_spec(**kw) -> LearnerSpec:
    return LearnerSpec("ensemble", **kw)


# ---------------------------------------------------------------------------
# predictors

class Predictor:
    n_features: int

    def predict(self, rows) -> np.ndarray:
        X = np.asarray(rows, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise WidthMismatch(f"expected {self.n_features} columns, got {X.shape[1]}")
        return self._predict(X)

    def _predict(self, X):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ConstantPredictor(Predictor):
    value: float
    n_features: int

    def _predict(self, X):
        return np.full(X.shape[0], self.value)


@dataclass(frozen=True, eq=False)
class LinearPredictor(Predictor):
    intercept: float
    coef: np.ndarray

    @property
    def n_features(self):
        return self.coef.size

    def _predict(self, X):
        return self.intercept + X @ self.coef


@dataclass(frozen=True, eq=False)
class GBTPredictor(Predictor):
    base: float
    learning_rate: float
    features: np.ndarray
    thresholds: np.ndarray
    values: np.ndarray
    n_features: int
    losses: np.ndarray = field(repr=False)
    n_trees: int = -1

    def __post_init__(self):
        if self.n_trees < 0:
            object.__setattr__(self, "n_trees", self.features.shape[0])

    def truncated(self, rounds: int) -> "GBTPredictor":
        """The model after its first ``rounds`` boosting rounds."""
        return replace(self, n_trees=min(rounds, self.features.shape[0]))

    def _predict(self, X):
        return _trees.predict_trees(np.ascontiguousarray(X), self.base, self.learning_rate,
                                    self.features, self.thresholds, self.values, self.n_trees)

    def staged(self, X, stages) -> np.ndarray:
        return _trees.predict_trees_staged(np.ascontiguousarray(X, dtype=float), self.base,
                                           self.learning_rate, self.features, self.thresholds,
                                           self.values, np.asarray(stages, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class EnsemblePredictor(Predictor):
    members: tuple
    weights: np.ndarray
    n_features: int
    cv_risk: np.ndarray = field(default=None, repr=False)

    def _predict(self, X):
        out = np.zeros(X.shape[0])
        for wt, m in zip(self.weights, self.members):
            if wt != 0.0:
                out += wt * m._predict(X)
        return out


# ---------------------------------------------------------------------------
# fitting

def fit(spec: LearnerSpec, data: Dataset) -> Predictor:
    """Fit ``spec`` to ``data`` by minimising weighted squared error."""
    data = data.positive()
    if spec.kind == "linear":
        return _fit_linear(data)
    if spec.kind == "gbt":
        return _fit_gbt(data, spec.rounds, spec.learning_rate, spec.max_depth,
                        spec.min_samples_leaf)
    return _fit_ensemble(spec, data)


def predict(p: Predictor, rows) -> np.ndarray:
    return p.predict(rows)


def _fit_linear(data: Dataset) -> LinearPredictor:
    X, y, w = data.features, data.targets, data.weights
    sw = w.sum()
    xm = w @ X / sw
    ym = float(w @ y / sw)
    Xc = X - xm
    G = Xc.T @ (Xc * w[:, None])
    b = Xc.T @ (w * (y - ym))
    p = X.shape[1]
    if p == 0:
        return LinearPredictor(ym, np.zeros(0))
    tr = np.trace(G)
    if not np.isfinite(tr):
        raise DegenerateDesign("non-finite normal equations")
    if tr <= 0:
        return LinearPredictor(ym, np.zeros(p))
    G[np.diag_indices(p)] += RIDGE_JITTER * tr / p
    try:
        coef = cho_solve(cho_factor(G), b)
    except (LinAlgError, ValueError) as exc:
        raise DegenerateDesign(f"normal equations singular: {exc}") from exc
    if not np.all(np.isfinite(coef)):
        raise DegenerateDesign("normal equations produced non-finite coefficients")
    return LinearPredictor(ym - float(xm @ coef), coef)


def _presort(X):
    idx = np.argsort(X, axis=0, kind="stable").T.copy()
    val = np.take_along_axis(X, idx.T, axis=0).T.copy()
    return idx, val


def _bin_features(X):
    """Rank of every value among its column's distinct values, plus those values."""
    F = X.shape[1]
    cols = [np.unique(X[:, f], return_inverse=True) for f in range(F)]
    n_bins = np.array([u.size for u, _ in cols], dtype=np.int64)
    values = np.zeros((F, int(n_bins.max())))
    Xb = np.empty(X.shape, dtype=np.int64)
    for f, (u, inv) in enumerate(cols):
        values[f, : u.size] = u
        Xb[:, f] = inv.ravel()
    return Xb, values, n_bins


def _fit_gbt(data: Dataset, rounds, learning_rate, max_depth, min_leaf, binned=None):
    X = np.ascontiguousarray(data.features)
    y, w = data.targets, data.weights
    base = float(w @ y / w.sum())
    n_nodes = 2 ** (max_depth + 1) - 1
    feats = np.full((rounds, n_nodes), -1, dtype=np.int64)
    thr = np.zeros((rounds, n_nodes))
    vals = np.zeros((rounds, n_nodes))
    losses = np.zeros(rounds + 1)
    Xb, values, n_bins = binned if binned is not None else _bin_features(X)
    _trees.boost_hist(X, Xb, values, n_bins, y, w, base, rounds, float(learning_rate),
                      max_depth, min_leaf, feats, thr, vals, losses)
    return GBTPredictor(base, float(learning_rate), feats, thr, vals, X.shape[1], losses)


def _gbt_family_key(m: LearnerSpec):
    return (m.learning_rate, m.max_depth, m.min_samples_leaf)


def _fit_members(members, data: Dataset):
    """Fit every member; boosted members sharing a rate/depth reuse one long run."""
    fitted = [None] * len(members)
    families = {}
    for j, m in enumerate(members):
        if m.kind == "gbt":
            families.setdefault(_gbt_family_key(m), []).append(j)
        else:
            fitted[j] = fit(m, data)
    binned = _bin_features(np.ascontiguousarray(data.features)) if families else None
    for key, js in families.items():
        longest = max(members[j].rounds for j in js)
        run = _fit_gbt(data, longest, key[0], key[1], key[2], binned)
        for j in js:
            fitted[j] = run.truncated(members[j].rounds)
    return fitted


def _member_predictions(fitted, X):
    cols = [None] * len(fitted)
    runs = {}
    for j, f in enumerate(fitted):
        if isinstance(f, GBTPredictor):
            runs.setdefault(id(f.features), []).append(j)
        else:
            cols[j] = f._predict(X)
    for js in runs.values():
        stages = sorted({fitted[j].n_trees for j in js})
        staged = fitted[js[0]].staged(X, stages)
        for j in js:
            cols[j] = staged[:, stages.index(fitted[j].n_trees)]
    return np.column_stack(cols)


def cv_folds(data: Dataset, V: int, seed: int) -> np.ndarray:
    """Row-level fold labels; rows of one group always share a fold."""
    groups = data.groups if data.groups is not None else np.arange(data.n)
    uniq, inv = np.unique(groups, return_inverse=True)
    V = min(V, uniq.size)
    perm = np.random.default_rng(seed).permutation(uniq.size)
    label = np.empty(uniq.size, dtype=np.int64)
    label[perm] = np.arange(uniq.size) % V
    return label[inv]


def simplex_weights(P, y, w, tol=SIMPLEX_TOL, max_sweeps=10_000) -> np.ndarray:
    """Minimise ``sum w (y - P @ theta)**2`` over the probability simplex.

    Pairwise coordinate descent: each step moves mass between two coordinates
    along the exact line minimiser, clipped to stay feasible.
    """
    q = P.shape[1]
    Q = P.T @ (P * w[:, None])
    c = P.T @ (w * y)
    theta = np.full(q, 1.0 / q)
    grad = Q @ theta - c
    for _ in range(max_sweeps):
        biggest = 0.0
        for a in range(q):
            for b in range(a + 1, q):
                curv = Q[a, a] + Q[b, b] - 2.0 * Q[a, b]
                if curv <= 0:
                    continue
                delta = -(grad[a] - grad[b]) / curv
                delta = min(max(delta, -theta[a]), theta[b])
                if delta != 0.0:
                    theta[a] += delta
                    theta[b] -= delta
                    grad += delta * (Q[:, a] - Q[:, b])
                    biggest = max(biggest, abs(delta))
        if biggest < tol:
            break
    theta = np.clip(theta, 0.0, None)
    return theta / theta.sum()


def _fit_ensemble(spec: LearnerSpec, data: Dataset) -> EnsemblePredictor:
    members = spec.members
    folds = cv_folds(data, spec.cv_folds, spec.seed)
    n_folds = int(folds.max()) + 1
    if n_folds < 2:
        weights = np.full(len(members), 1.0 / len(members))
        risk = None
    else:
        oof = np.empty((data.n, len(members)))
        for v in range(n_folds):
            hold = folds == v
            train = data.take(~hold)
            if not np.any(train.weights > 0):
                oof[hold] = float(data.targets[~hold].mean())
                continue
            fitted = _fit_members(members, train.positive())
            oof[hold] = _member_predictions(fitted, data.features[hold])
        resid = data.targets[:, None] - oof
        risk = (data.weights @ resid ** 2) / data.weights.sum()
        weights = simplex_weights(oof, data.targets, data.weights)
    full = _fit_members(members, data)
    assert np.all(weights >= 0) and abs(weights.sum() - 1.0) < 1e-12
    return EnsemblePredictor(tuple(full), weights, data.features.shape[1], risk)
