"""Time-ordered cross-validation and the experiment harnesses built on it.

Feature tables are split into 11 consecutive windows by creation time; fold f
trains on windows 1..f and tests on window f+1. The scaler and class weights are
fit on the training windows only.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from revue import RevueError
from revue.evaluation.metrics import DEFAULT_K, K_VALUES, METRIC_NAMES, auc, metric_suite, nimpr, rimpr
from revue.features import DIMENSIONS, FEATURE_NAMES, feature_columns
from revue.learner import GbdtParams, LogisticParams, fit_gbdt, fit_logistic

log = logging.getLogger(__name__)

N_WINDOWS = 11
NEW_AUTHOR_LIMIT = 10


class EvaluationError(RevueError):
    pass


@dataclass(frozen=True)
class FoldSpec:
    fold: int
    train_windows: tuple[int, ...]
    test_window: int
    train_rows: np.ndarray = field(repr=False, compare=False)
    test_rows: np.ndarray = field(repr=False, compare=False)


def window_bounds(n: int, n_windows: int = N_WINDOWS) -> list[tuple[int, int]]:
    if n < n_windows:
        raise EvaluationError(f"need at least {n_windows} rows for a longitudinal split, got {n}")
    size, extra = divmod(n, n_windows)
    bounds, start = [], 0
    for w in range(n_windows):
        stop = start + size + (1 if w < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def longitudinal_split(n: int, n_windows: int = N_WINDOWS) -> list[FoldSpec]:
    """Folds over ``n`` rows already sorted by creation time (windows numbered from 1)."""
    bounds = window_bounds(n, n_windows)
    folds = []
    for f in range(1, n_windows):
        folds.append(FoldSpec(
            fold=f,
            train_windows=tuple(range(1, f + 1)),
            test_window=f + 1,
            train_rows=np.arange(0, bounds[f - 1][1]),
            test_rows=np.arange(*bounds[f]),
        ))
    return folds


def sort_by_creation(table: pd.DataFrame) -> pd.DataFrame:
    t = table.assign(_created=pd.to_datetime(table["created_at"], utc=True, format="ISO8601"))
    t = t.sort_values(["_created", "change_key"], kind="mergesort").reset_index(drop=True)
    return t


@dataclass
class FoldResult:
    fold: int
    repeat: int
    metrics: dict[str, float]
    train_seconds: float
    n_train: int
    n_test: int


@dataclass
class MetricsReport:
    results: list[FoldResult] = field(default_factory=list)
    repeats: int = 1
    annotations: list[str] = field(default_factory=list)
    label: str = ""

    @property
    def folds(self) -> list[int]:
        return sorted({r.fold for r in self.results})

    @property
    def empty(self) -> bool:
        return not self.results

    def fold_metrics(self) -> dict[int, dict[str, float]]:
        """Per-fold metric values averaged over repeats."""
        out = {}
        for f in self.folds:
            rows = [r.metrics for r in self.results if r.fold == f]
            out[f] = {m: float(np.mean([r[m] for r in rows])) for m in rows[0]}
        return out

    def fold_seconds(self) -> dict[int, float]:
        return {f: float(np.mean([r.train_seconds for r in self.results if r.fold == f])) for f in self.folds}

    @property
    def mean(self) -> dict[str, float]:
        """Mean over folds within each repeat, then over repeats."""
        if not self.results:
            return {}
        per_repeat = []
        for rep in sorted({r.repeat for r in self.results}):
            rows = [r.metrics for r in self.results if r.repeat == rep]
            per_repeat.append({m: np.mean([r[m] for r in rows]) for m in rows[0]})
        return {m: float(np.mean([p[m] for p in per_repeat])) for m in per_repeat[0]}

    @property
    def auc(self) -> float:
        return self.mean.get("auc", float("nan"))

    @property
    def er_at_k(self) -> dict[int, float]:
        mean = self.mean
        return {k: mean[f"er@{k}"] for k in K_VALUES if f"er@{k}" in mean}

    def to_dict(self, timing: bool = False) -> dict:
        doc = {
            "label": self.label,
            "repeats": self.repeats,
            "mean": self.mean,
            "folds": [{"fold": f, **m} for f, m in self.fold_metrics().items()],
            "annotations": list(self.annotations),
        }
        if timing:
            doc["train_seconds"] = {str(f): s for f, s in self.fold_seconds().items()}
        return doc


# -- model plumbing --------------------------------------------------------------

def fit_model(kind: str, X, y, params, feature_names):
    if kind == "gbdt":
        return fit_gbdt(X, y, params, feature_names=feature_names)
    if kind == "logistic":
        return fit_logistic(X, y, params if isinstance(params, LogisticParams) else None, feature_names)
    raise ValueError(f"unknown model kind {kind!r}")


def _reseed(params, repeat: int):
    if isinstance(params, GbdtParams):
        return replace(params, seed=params.seed + repeat)
    return params


def _fold_task(kind, params, X, y, order_key, train_rows, test_rows, names):
    t0 = time.perf_counter()
    model = fit_model(kind, X[train_rows], y[train_rows], params, names)
    seconds = time.perf_counter() - t0
    proba = model.predict_proba(X[test_rows])
    return proba, seconds


def _single_class(y) -> bool:
    return len(np.unique(y)) < 2


def run_longitudinal_cv(
    table: pd.DataFrame,
    params: GbdtParams | LogisticParams | None = None,
    repeats: int = 10,
    columns: Sequence[str] | None = None,
    model: str = "gbdt",
    test_filter: Callable[[pd.DataFrame], np.ndarray] | None = None,
    jobs: int = 1,
    label: str = "longitudinal",
) -> MetricsReport:
    """Longitudinal 10-fold evaluation, rerun ``repeats`` times with shifted seeds.

    ``test_filter`` maps the test window to a boolean mask of rows to score.
    """
    params = params if params is not None else (GbdtParams() if model == "gbdt" else LogisticParams())
    table = sort_by_creation(table)
    columns = list(columns) if columns is not None else feature_columns(table)
    X = table[columns].to_numpy(dtype=float)
    y = table["label"].to_numpy(dtype=int)
    created = table["_created"].to_numpy()
    report = MetricsReport(repeats=repeats, label=label)

    tasks = []
    for spec in longitudinal_split(len(table)):
        test_rows = spec.test_rows
        if test_filter is not None:
            test_rows = test_rows[np.asarray(test_filter(table.iloc[test_rows]), dtype=bool)]
        if len(test_rows) == 0:
            report.annotations.append(f"fold {spec.fold}: skipped (empty test window after filtering)")
            continue
        if _single_class(y[spec.train_rows]):
            report.annotations.append(f"fold {spec.fold}: skipped (single-class training windows)")
            continue
        if _single_class(y[test_rows]):
            report.annotations.append(f"fold {spec.fold}: skipped (single-class test window)")
            continue
        if created[test_rows].min() < created[spec.train_rows].max():
            raise EvaluationError(f"fold {spec.fold}: test rows precede training rows")
        for rep in range(repeats):
            tasks.append((spec, test_rows, rep))

    def run(task):
        spec, test_rows, rep = task
        proba, seconds = _fold_task(model, _reseed(params, rep), X, y, created, spec.train_rows, test_rows, columns)
        metrics = metric_suite(proba, y[test_rows], created[test_rows])
        return FoldResult(spec.fold, rep, metrics, seconds, len(spec.train_rows), len(test_rows))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    report.results = sorted(results, key=lambda r: (r.fold, r.repeat))
    return report


def k_sweep(report: MetricsReport) -> pd.DataFrame:
    return pd.DataFrame({"K": list(report.er_at_k), "er": list(report.er_at_k.values())})


# -- new authors -----------------------------------------------------------------

def new_author_mask(rows: pd.DataFrame, limit: int = NEW_AUTHOR_LIMIT) -> np.ndarray:
    return rows["total_change_number"].to_numpy() < limit


def new_author_eval(table: pd.DataFrame, params=None, repeats: int = 10, model: str = "gbdt",
                    jobs: int = 1) -> MetricsReport:
    """Longitudinal evaluation scored only on changes by authors with < 10 prior changes."""
    return run_longitudinal_cv(table, params, repeats, model=model, test_filter=new_author_mask, jobs=jobs,
                               label="new-authors")


# -- feature dimensions ----------------------------------------------------------

def dimension_columns(dimension: str, mode: str) -> list[str]:
    if dimension not in DIMENSIONS:
        raise ValueError(f"unknown dimension {dimension!r}")
    if mode == "single":
        return list(DIMENSIONS[dimension])
    if mode == "exclude":
        return [f for f in FEATURE_NAMES if f not in DIMENSIONS[dimension]]
    raise ValueError("mode must be 'single' or 'exclude'")


def dimension_eval(table: pd.DataFrame, params=None, mode: str = "single", repeats: int = 10,
                   model: str = "gbdt", dimensions: Sequence[str] | None = None, jobs: int = 1) -> dict[str, MetricsReport]:
    out = {}
    for dim in dimensions or DIMENSIONS:
        out[dim] = run_longitudinal_cv(table, params, repeats, dimension_columns(dim, mode), model, jobs=jobs,
                                       label=f"{mode}:{dim}")
    return out


# -- multiple revisions ----------------------------------------------------------

@dataclass
class RevisionReport:
    fold_auc: dict[int, dict[str, float]] = field(default_factory=dict)
    annotations: list[str] = field(default_factory=list)
    repeats: int = 1
    mode: str = ""

    def _mean(self, key) -> float:
        vals = [v[key] for v in self.fold_auc.values() if not np.isnan(v[key])]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def total(self) -> float:
        return self._mean("total")

    @property
    def first(self) -> float:
        return self._mean("first")

    @property
    def last(self) -> float:
        return self._mean("last")

    @property
    def rimpr(self) -> float:
        return rimpr(self.first, self.last)

    @property
    def nimpr(self) -> float:
        return nimpr(self.first, self.last)

    def to_dict(self, timing: bool = False) -> dict:
        return {
            "mode": self.mode,
            "repeats": self.repeats,
            "total": self.total,
            "first_revision": self.first,
            "last_revision": self.last,
            "rimpr": self.rimpr,
            "nimpr": self.nimpr,
            "folds": [{"fold": f, **v} for f, v in sorted(self.fold_auc.items())],
            "annotations": list(self.annotations),
        }


def _slice_auc(proba, y, mask) -> float:
    if not mask.any() or _single_class(y[mask]):
        return float("nan")
    return auc(proba[mask], y[mask])


def revision_eval(table: pd.DataFrame, params=None, repeats: int = 10, model: str = "gbdt",
                  mode: str | None = None) -> RevisionReport:
    """AUC over all / first-revision / final-revision test rows of a per-revision feature table.

    Windows are formed over changes (ordered by creation), so every revision of a
    change lands in the same window.
    """
    if "revision_number" not in table.columns:
        raise EvaluationError("revision evaluation needs a per-revision feature table")
    params = params if params is not None else (GbdtParams() if model == "gbdt" else LogisticParams())
    table = sort_by_creation(table)
    columns = feature_columns(table)
    X = table[columns].to_numpy(dtype=float)
    y = table["label"].to_numpy(dtype=int)
    rev = table["revision_number"].to_numpy(dtype=int)
    last = rev == table.groupby("change_key")["revision_number"].transform("max").to_numpy()

    keys = pd.unique(table["change_key"])
    position = {k: i for i, k in enumerate(keys)}
    change_pos = table["change_key"].map(position).to_numpy()
    mode = mode or ("approach2" if "weighted_approval_score" in table.columns else "approach1")
    report = RevisionReport(repeats=repeats, mode=mode)
    for spec in longitudinal_split(len(keys)):
        train = np.flatnonzero(change_pos < len(spec.train_rows))
        test = np.flatnonzero((change_pos >= spec.test_rows[0]) & (change_pos <= spec.test_rows[-1]))
        if _single_class(y[train]) or _single_class(y[test]):
            report.annotations.append(f"fold {spec.fold}: skipped (single-class window)")
            continue
        sums = {"total": [], "first": [], "last": []}
        for rep in range(repeats):
            m = fit_model(model, X[train], y[train], _reseed(params, rep), columns)
            proba = m.predict_proba(X[test])
            yt = y[test]
            sums["total"].append(auc(proba, yt))
            sums["first"].append(_slice_auc(proba, yt, rev[test] == 1))
            sums["last"].append(_slice_auc(proba, yt, last[test]))
        report.fold_auc[spec.fold] = {k: float(np.mean(v)) for k, v in sums.items()}
    return report


# -- cross project ---------------------------------------------------------------

def cross_project_eval(train_table: pd.DataFrame, test_table: pd.DataFrame, params=None, repeats: int = 1,
                       model: str = "gbdt") -> MetricsReport:
    """Fit once on one project's full table, score another project's full table."""
    train_cols, test_cols = feature_columns(train_table), feature_columns(test_table)
    if train_cols != test_cols or list(train_table.columns) != list(test_table.columns):
        raise EvaluationError("train and test feature tables have different columns")
    params = params if params is not None else (GbdtParams() if model == "gbdt" else LogisticParams())
    test_table = sort_by_creation(test_table)
    X, y = train_table[train_cols].to_numpy(float), train_table["label"].to_numpy(int)
    Xt, yt = test_table[test_cols].to_numpy(float), test_table["label"].to_numpy(int)
    created = test_table["_created"].to_numpy()
    report = MetricsReport(repeats=repeats, label="cross-project")
    for rep in range(repeats):
        t0 = time.perf_counter()
        m = fit_model(model, X, y, _reseed(params, rep), train_cols)
        seconds = time.perf_counter() - t0
        report.results.append(FoldResult(1, rep, metric_suite(m.predict_proba(Xt), yt, created), seconds, len(y), len(yt)))
    return report


# -- grid tuning -----------------------------------------------------------------

def grid_tune(table: pd.DataFrame, n_estimators: Sequence[int], learning_rates: Sequence[float],
              params: GbdtParams | None = None, repeats: int = 1, jobs: int = 1) -> tuple[pd.DataFrame, GbdtParams]:
    """Longitudinal CV per grid cell; best cell by mean AUC (ties: fewer trees, then larger rate)."""
    if not n_estimators or not learning_rates:
        raise ValueError("grid must be non-empty")
    params = params or GbdtParams()
    rows = []
    for ne in n_estimators:
        for lr in learning_rates:
            rep = run_longitudinal_cv(table, replace(params, n_estimators=int(ne), learning_rate=float(lr)), repeats,
                                      jobs=jobs, label=f"tune:{ne}:{lr}")
            mean = rep.mean
            rows.append({
                "n_estimators": int(ne),
                "learning_rate": float(lr),
                "auc": mean.get("auc", float("nan")),
                f"er@{DEFAULT_K}": mean.get(f"er@{DEFAULT_K}", float("nan")),
                "f1_merged": mean.get("f1_merged", float("nan")),
                "f1_abandoned": mean.get("f1_abandoned", float("nan")),
            })
    grid = pd.DataFrame(rows)
    best = min(rows, key=lambda r: (-np.nan_to_num(r["auc"], nan=-np.inf), r["n_estimators"], -r["learning_rate"]))
    return grid, replace(params, n_estimators=best["n_estimators"], learning_rate=best["learning_rate"])


__all__ = [
    "FoldSpec",
    "MetricsReport",
    "RevisionReport",
    "METRIC_NAMES",
    "cross_project_eval",
    "dimension_eval",
    "grid_tune",
    "k_sweep",
    "longitudinal_split",
    "new_author_eval",
    "revision_eval",
    "run_longitudinal_cv",
]
