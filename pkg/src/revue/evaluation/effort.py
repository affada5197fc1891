"""Developer-effort summaries with Tukey-fence outlier removal."""

from __future__ import annotations

from typing import Iterable

import numpy as np
import pandas as pd

from revue.corpus import ChangeRecord

EFFORT_METRICS = ("duration_days", "messages", "revisions")
GROUPS = ("Total", "Merged", "Abandoned")


def tukey_fences(values) -> tuple[float, float]:
    """``[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`` with linearly interpolated quartiles.

    Quartiles interpolate at position ``n*p + 1/2`` (the Hazen rule), which
    gives Q1 = 3.25 and Q3 = 8.75 for ``[1..10, 100]``.
    """
    q1, q3 = np.percentile(np.asarray(values, dtype=float), [25, 75], method="hazen")
    iqr = q3 - q1
    return q1 - 1.5 * iqr, q3 + 1.5 * iqr


def remove_outliers(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return v
    lo, hi = tukey_fences(v)
    return v[(v >= lo) & (v <= hi)]


def effort_table(changes: Iterable[ChangeRecord]) -> pd.DataFrame:
    rows = [
        {
            "status": c.status.value,
            "duration_days": (c.closed_at - c.created_at).total_seconds() / 86400.0,
            "messages": len(c.messages),
            "revisions": len(c.revisions),
        }
        for c in changes
    ]
    return pd.DataFrame(rows, columns=["status", *EFFORT_METRICS])


def effort_stats(changes: Iterable[ChangeRecord]) -> pd.DataFrame:
    """Mean effort per group after dropping each metric's outliers separately."""
    table = effort_table(changes)
    if table.empty:
        raise ValueError("effort_stats needs a non-empty corpus")
    out = []
    for group in GROUPS:
        part = table if group == "Total" else table[table["status"] == group]
        row = {"group": group, "changes": len(part)}
        for m in EFFORT_METRICS:
            kept = remove_outliers(part[m].to_numpy())
            row[m] = float(kept.mean()) if len(kept) else float("nan")
        out.append(row)
    return pd.DataFrame(out, columns=["group", "changes", *EFFORT_METRICS])
