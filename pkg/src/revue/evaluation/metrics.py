"""Ranking and classification metrics for merge prediction (label 1 = merged)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

K_VALUES = tuple(range(10, 100, 10))
DEFAULT_K = 20
THRESHOLD = 0.5


def _check_binary(labels) -> np.ndarray:
    y = np.asarray(labels).astype(int)
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("metric needs both merged and abandoned samples")
    return y


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_merged > score_abandoned) + 0.5 P(tie)."""
    y = _check_binary(labels)
    s = np.asarray(scores, dtype=float)
    _, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    ranks = (upper - (counts - 1) / 2.0)[inverse]
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def top_k_size(k_percent: float, n: int) -> int:
    if float(k_percent).is_integer():
        size = -(-int(k_percent) * n // 100)
    else:
        size = math.ceil(round(k_percent * n / 100.0, 9))
    return max(1, size)


def er_at_k(scores, labels, k_percent: float = DEFAULT_K, order_key=None) -> float:
    """Share of merged changes among the top ``ceil(K% * N)`` by descending score.

    Ties on score are broken by ascending ``order_key`` (creation time), then by
    position in the input.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if len(s) == 0:
        raise ValueError("er_at_k needs at least one sample")
    if not 0 < k_percent <= 90:
        raise ValueError("K must lie in (0, 90]")
    key = np.arange(len(s)) if order_key is None else np.asarray(order_key)
    ranked = np.lexsort((np.arange(len(s)), key, -s))
    top = ranked[: top_k_size(k_percent, len(s))]
    return float(y[top].mean())


@dataclass
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_predictions(cls, predicted, labels) -> "Confusion":
        p = np.asarray(predicted).astype(bool)
        y = np.asarray(labels).astype(bool)
        return cls(int(np.sum(p & y)), int(np.sum(p & ~y)), int(np.sum(~p & ~y)), int(np.sum(~p & y)))


def _div(a, b) -> float:
    return a / b if b else 0.0


def _f1(p, r) -> float:
    return _div(2 * p * r, p + r)


def class_prf(probabilities, labels, threshold: float = THRESHOLD) -> dict[str, float]:
    """Precision/recall/F1 for both classes; a change is predicted merged when p >= threshold."""
    c = Confusion.from_predictions(np.asarray(probabilities) >= threshold, labels)
    pm, rm = _div(c.tp, c.tp + c.fp), _div(c.tp, c.tp + c.fn)
    pa, ra = _div(c.tn, c.tn + c.fn), _div(c.tn, c.tn + c.fp)
    return {
        "precision_merged": pm,
        "recall_merged": rm,
        "f1_merged": _f1(pm, rm),
        "precision_abandoned": pa,
        "recall_abandoned": ra,
        "f1_abandoned": _f1(pa, ra),
    }


def rimpr(old: float, new: float) -> float:
    if old == 0:
        raise ValueError("relative improvement is undefined for an old score of 0")
    return (new - old) / old


def nimpr(old: float, new: float) -> float:
    if old == 1:
        raise ValueError("normalized improvement is undefined for an old score of 1")
    return (new - old) / (1 - old)


def metric_suite(probabilities, labels, order_key=None) -> dict[str, float]:
    out = {"auc": auc(probabilities, labels)}
    for k in K_VALUES:
        out[f"er@{k}"] = er_at_k(probabilities, labels, k, order_key)
    out.update(class_prf(probabilities, labels))
    return out


METRIC_NAMES = ("auc",) + tuple(f"er@{k}" for k in K_VALUES) + tuple(class_prf([1, 0], [1, 0]))
