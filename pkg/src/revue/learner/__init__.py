from revue.learner.gbdt import (
    GbdtModel,
    GbdtParams,
    feature_importance,
    fit_gbdt,
    predict_proba,
    sigmoid,
    train_gbdt,
    weighted_log_loss,
)
from revue.learner.io import ModelFormatError, load_model, save_model
from revue.learner.logistic import LogisticModel, LogisticParams, fit_logistic, train_logistic
from revue.learner.scaling import ScalerParams, compute_class_weights, fit_scaler, sample_weights, transform

__all__ = [
    "GbdtModel",
    "GbdtParams",
    "LogisticModel",
    "LogisticParams",
    "ModelFormatError",
    "ScalerParams",
    "compute_class_weights",
    "feature_importance",
    "fit_gbdt",
    "fit_logistic",
    "fit_scaler",
    "load_model",
    "predict_proba",
    "sample_weights",
    "save_model",
    "sigmoid",
    "train_gbdt",
    "train_logistic",
    "transform",
    "weighted_log_loss",
]
