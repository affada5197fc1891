from revue.evaluation.effort import effort_stats, remove_outliers, tukey_fences
from revue.evaluation.longitudinal import (
    EvaluationError,
    FoldSpec,
    MetricsReport,
    RevisionReport,
    cross_project_eval,
    dimension_columns,
    dimension_eval,
    grid_tune,
    k_sweep,
    longitudinal_split,
    new_author_eval,
    revision_eval,
    run_longitudinal_cv,
)
from revue.evaluation.metrics import K_VALUES, auc, class_prf, er_at_k, metric_suite, nimpr, rimpr

__all__ = [
    "EvaluationError",
    "FoldSpec",
    "K_VALUES",
    "MetricsReport",
    "RevisionReport",
    "auc",
    "class_prf",
    "cross_project_eval",
    "dimension_columns",
    "dimension_eval",
    "effort_stats",
    "er_at_k",
    "grid_tune",
    "k_sweep",
    "longitudinal_split",
    "metric_suite",
    "new_author_eval",
    "nimpr",
    "remove_outliers",
    "revision_eval",
    "rimpr",
    "run_longitudinal_cv",
    "tukey_fences",
]
