"""Weighted logistic regression by full-batch gradient descent (baseline model)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from revue import RevueError
from revue.learner.gbdt import sigmoid
from revue.learner.scaling import ScalerParams, fit_scaler, sample_weights, transform


@dataclass
class LogisticParams:
    epochs: int = 1000
    step: float = 0.5
    class_weighting: str = "balanced"


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    scaler: ScalerParams
    feature_names: list[str]
    params: LogisticParams | None = None

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def predict_proba(self, matrix) -> np.ndarray:
        X = np.asarray(matrix, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return sigmoid(transform(self.scaler, X) @ self.weights + self.bias)


def loss_and_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Weighted mean log-loss and its gradient; ``theta = [weights..., bias]``."""
    z = X @ theta[:-1] + theta[-1]
    # log(1 + e^z) computed stably
    softplus = np.logaddexp(0.0, z)
    loss = np.sum(w * (softplus - y * z)) / np.sum(w)
    r = w * (sigmoid(z) - y) / np.sum(w)
    return float(loss), np.append(X.T @ r, r.sum())


def train_logistic(matrix, labels, weights=None, epochs: int = 1000, step: float = 0.5,
                   scaler: ScalerParams | None = None, feature_names=None) -> LogisticModel:
    X = np.asarray(matrix, dtype=float)
    y = np.asarray(labels, dtype=float)
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("train_logistic needs both classes present")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    theta = np.zeros(X.shape[1] + 1)
    for _ in range(epochs):
        loss, grad = loss_and_grad(theta, X, y, w)
        if not np.isfinite(loss):
            raise RevueError("logistic regression diverged (non-finite loss)")
        theta -= step * grad
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(X.shape[1])]
    return LogisticModel(theta[:-1].copy(), float(theta[-1]), scaler or ScalerParams.identity(X.shape[1]), names,
                         LogisticParams(epochs, step))


def fit_logistic(matrix, labels, params: LogisticParams | None = None, feature_names=None) -> LogisticModel:
    params = params or LogisticParams()
    scaler = fit_scaler(matrix)
    w = sample_weights(labels, params.class_weighting == "balanced")
    model = train_logistic(transform(scaler, matrix), labels, w, params.epochs, params.step, scaler, feature_names)
    model.params = params
    return model
