"""Serializing evaluation results: JSON documents and aligned plain-text tables."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping

import pandas as pd

from revue.evaluation.longitudinal import MetricsReport, RevisionReport
from revue.evaluation.metrics import DEFAULT_K

SUMMARY_COLUMNS = (
    "auc",
    f"er@{DEFAULT_K}",
    "precision_merged",
    "recall_merged",
    "f1_merged",
    "precision_abandoned",
    "recall_abandoned",
    "f1_abandoned",
)


def _clean(obj):
    # strict JSON: NaN/inf become null, numpy scalars become Python numbers
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(doc) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(doc, path) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def format_table(df: pd.DataFrame, digits: int = 4) -> str:
    if df.empty:
        return "(no rows)\n"
    return df.to_string(index=False, float_format=lambda v: f"{v:.{digits}f}", na_rep="-") + "\n"


def summary_row(report: MetricsReport, name: str) -> dict:
    mean = report.mean
    return {"name": name, **{c: mean.get(c, float("nan")) for c in SUMMARY_COLUMNS}}


def summary_table(reports: Mapping[str, MetricsReport]) -> pd.DataFrame:
    """One row per report: AUC, ER@20 and per-class precision/recall/F1."""
    return pd.DataFrame([summary_row(r, name) for name, r in reports.items()],
                        columns=["name", *SUMMARY_COLUMNS])


def fold_table(report: MetricsReport) -> pd.DataFrame:
    rows = [{"fold": f, **{c: m.get(c, float("nan")) for c in SUMMARY_COLUMNS}}
            for f, m in report.fold_metrics().items()]
    return pd.DataFrame(rows, columns=["fold", *SUMMARY_COLUMNS])


def k_sweep_table(report: MetricsReport) -> pd.DataFrame:
    er = report.er_at_k
    return pd.DataFrame({"K": list(er), "er": list(er.values())})


def timing_table(report: MetricsReport) -> pd.DataFrame:
    sec = report.fold_seconds()
    rows = [{"fold": f, "train_rows": _train_rows(report, f), "train_seconds": s} for f, s in sec.items()]
    return pd.DataFrame(rows, columns=["fold", "train_rows", "train_seconds"])


def _train_rows(report: MetricsReport, fold: int) -> int:
    return next(r.n_train for r in report.results if r.fold == fold)


def revision_table(reports: Mapping[str, RevisionReport]) -> pd.DataFrame:
    rows = [{"mode": name, "total": r.total, "first_revision": r.first, "last_revision": r.last,
             "rimpr": r.rimpr, "nimpr": r.nimpr} for name, r in reports.items()]
    return pd.DataFrame(rows, columns=["mode", "total", "first_revision", "last_revision", "rimpr", "nimpr"])


def importance_table(importance: Mapping[str, float]) -> pd.DataFrame:
    df = pd.DataFrame({"feature": list(importance), "importance": list(importance.values())})
    return df.sort_values(["importance", "feature"], ascending=[False, True], kind="mergesort").reset_index(drop=True)


def render(report: MetricsReport, title: str | None = None) -> str:
    """Text block for one longitudinal report: summary, per-fold rows, annotations."""
    parts = [f"# {title or report.label}\n", format_table(summary_table({report.label: report})),
             "\nper fold\n", format_table(fold_table(report))]
    for note in report.annotations:
        parts.append(f"note: {note}\n")
    return "".join(parts)
