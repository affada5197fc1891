"""Second-order gradient boosting of leaf-wise regression trees for binary labels."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from revue.learner.scaling import ScalerParams, fit_scaler, sample_weights, transform
from revue.learner.tree import encode_columns, grow_tree, newton_terms, predict_tree, scratch_histograms

log = logging.getLogger(__name__)

L2_REG = 1.0


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def weighted_log_loss(y, p, w) -> float:
    eps = 1e-15
    p = np.clip(p, eps, 1 - eps)
    return float(-np.sum(w * (y * np.log(p) + (1 - y) * np.log(1 - p))) / np.sum(w))


@dataclass
class GbdtParams:
    n_estimators: int = 500
    learning_rate: float = 0.01
    num_leaves: int = 31
    min_samples_leaf: int = 20
    row_subsample: float = 0.9
    seed: int = 2021
    class_weighting: str = "balanced"

    def __post_init__(self):
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.num_leaves < 1 or self.min_samples_leaf < 1:
            raise ValueError("num_leaves and min_samples_leaf must be >= 1")
        if not 0 < self.row_subsample <= 1:
            raise ValueError("row_subsample must lie in (0, 1]")
        if self.class_weighting not in ("balanced", "none"):
            raise ValueError("class_weighting must be 'balanced' or 'none'")


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))


@dataclass
class GbdtModel:
    init_score: float
    trees: list[Tree]
    params: GbdtParams
    scaler: ScalerParams
    feature_names: list[str]
    train_loss: list[float] = field(default_factory=list, repr=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def raw_score(self, matrix) -> np.ndarray:
        X = np.asarray(matrix, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} features, got {X.shape[1]}")
        Z = np.ascontiguousarray(transform(self.scaler, X))
        F = np.full(Z.shape[0], self.init_score)
        for tree in self.trees:
            F += self.params.learning_rate * tree.predict(Z)
        return F

    def predict_proba(self, matrix) -> np.ndarray:
        return sigmoid(self.raw_score(matrix))


def train_gbdt(matrix, labels, params: GbdtParams | None = None, *, sample_weight=None,
               scaler: ScalerParams | None = None, feature_names=None, record_loss: bool = False) -> GbdtModel:
    """Boost trees on an (already standardized) matrix.

    ``scaler`` is stored on the model so that :meth:`GbdtModel.predict_proba`
    accepts raw rows; pass ``None`` when ``matrix`` is used as is.
    """
    params = params or GbdtParams()
    X = np.ascontiguousarray(matrix, dtype=float)
    y = np.asarray(labels, dtype=float)
    n, d = X.shape
    if n < 2 or len(y) != n:
        raise ValueError("train_gbdt needs at least 2 rows and one label per row")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("train_gbdt needs both classes present")
    w = sample_weights(y, params.class_weighting == "balanced") if sample_weight is None else np.asarray(sample_weight, float)
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(d)]
    scaler = scaler or ScalerParams.identity(d)

    init = float(np.log(np.sum(w * y) / np.sum(w * (1 - y))))
    model = GbdtModel(init, [], params, scaler, names)
    F = np.full(n, init)
    if record_loss:
        model.train_loss.append(weighted_log_loss(y, sigmoid(F), w))
    if np.all(X == X[0]):
        log.warning("all training rows are identical; returning an init-score-only model")
        return model

    enc = encode_columns(X)
    scratch = scratch_histograms(params.num_leaves, len(enc.bin_values))
    rng = np.random.default_rng(params.seed)
    n_sample = max(1, int(round(params.row_subsample * n)))
    in_sample = np.ones(n, dtype=bool)
    grad, hess, step = np.empty(n), np.empty(n), np.empty(n)
    for _ in range(params.n_estimators):
        newton_terms(F, y, w, grad, hess)
        if n_sample < n:
            in_sample[:] = False
            in_sample[rng.permutation(n)[:n_sample]] = True
        feat, thr, lft, rgt, val, gain = grow_tree(
            *enc, grad, hess, in_sample, params.num_leaves, params.min_samples_leaf, L2_REG, scratch, step
        )
        model.trees.append(Tree(feat, thr, lft, rgt, val, gain))
        F += params.learning_rate * step
        if record_loss:
            model.train_loss.append(weighted_log_loss(y, sigmoid(F), w))
    return model


def fit_gbdt(matrix, labels, params: GbdtParams | None = None, feature_names=None, record_loss=False) -> GbdtModel:
    """Standardize, weight classes and boost: the per-fold training recipe."""
    scaler = fit_scaler(matrix)
    return train_gbdt(transform(scaler, matrix), labels, params, scaler=scaler,
                      feature_names=feature_names, record_loss=record_loss)


def predict_proba(model, matrix) -> np.ndarray:
    return model.predict_proba(matrix)


def feature_importance(model: GbdtModel, importance_type: str = "split") -> dict[str, float]:
    """Per-feature importance as percentages summing to 100 (all zeros for a stump-free model)."""
    totals = np.zeros(model.n_features)
    for tree in model.trees:
        internal = tree.feature >= 0
        if importance_type == "split":
            np.add.at(totals, tree.feature[internal], 1.0)
        elif importance_type == "gain":
            np.add.at(totals, tree.feature[internal], tree.gain[internal])
        else:
            raise ValueError("importance_type must be 'split' or 'gain'")
    s = totals.sum()
    if s > 0:
        totals = 100.0 * totals / s
    return dict(zip(model.feature_names, totals.tolist()))
