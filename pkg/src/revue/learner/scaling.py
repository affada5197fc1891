from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, n_features: int) -> "ScalerParams":
        return cls(np.zeros(n_features), np.ones(n_features))

    @property
    def n_features(self) -> int:
        return len(self.mean)


def fit_scaler(matrix) -> ScalerParams:
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("fit_scaler needs a non-empty 2-D matrix")
    return ScalerParams(X.mean(axis=0), X.std(axis=0))


def transform(params: ScalerParams, matrix) -> np.ndarray:
    """Z-score each column; zero-variance columns become 0."""
    X = np.asarray(matrix, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != params.n_features:
        raise ValueError(f"expected {params.n_features} columns, got {X.shape[1]}")
    safe = np.where(params.std > 0, params.std, 1.0)
    Z = (X - params.mean) / safe
    Z[:, params.std == 0] = 0.0
    return Z


def compute_class_weights(labels) -> tuple[float, float]:
    """``(w_merged, w_abandoned)`` with ``w_c = N / (2 N_c)``."""
    y = np.asarray(labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("class weights need both classes present")
    n = n_pos + n_neg
    return n / (2.0 * n_pos), n / (2.0 * n_neg)


def sample_weights(labels, balanced: bool = True) -> np.ndarray:
    y = np.asarray(labels)
    if not balanced:
        return np.ones(len(y))
    w_pos, w_neg = compute_class_weights(y)
    return np.where(y == 1, w_pos, w_neg)
