from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from revue import RevueError
from revue.learner.gbdt import GbdtModel, GbdtParams, Tree
from revue.learner.logistic import LogisticModel, LogisticParams
from revue.learner.scaling import ScalerParams

MODEL_FORMAT = "revue-model"
MODEL_VERSION = 1


class ModelFormatError(RevueError):
    pass


def model_to_dict(model) -> dict:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_names": list(model.feature_names),
        "scaler": {"mean": model.scaler.mean.tolist(), "std": model.scaler.std.tolist()},
    }
    if isinstance(model, GbdtModel):
        doc["kind"] = "gbdt"
        doc["params"] = asdict(model.params)
        doc["init_score"] = model.init_score
        doc["trees"] = [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
                "gain": t.gain.tolist(),
            }
            for t in model.trees
        ]
    elif isinstance(model, LogisticModel):
        doc["kind"] = "logistic"
        doc["params"] = asdict(model.params or LogisticParams())
        doc["weights"] = model.weights.tolist()
        doc["bias"] = model.bias
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return doc


def model_from_dict(doc: dict):
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a revue model document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        scaler = ScalerParams(np.asarray(doc["scaler"]["mean"], float), np.asarray(doc["scaler"]["std"], float))
        names = list(doc["feature_names"])
        if doc["kind"] == "gbdt":
            trees = [
                Tree(
                    np.asarray(t["feature"], np.int64),
                    np.asarray(t["threshold"], float),
                    np.asarray(t["left"], np.int64),
                    np.asarray(t["right"], np.int64),
                    np.asarray(t["value"], float),
                    np.asarray(t["gain"], float),
                )
                for t in doc["trees"]
            ]
            for t in trees:
                if np.any(t.feature >= len(names)) or not np.all(np.isfinite(t.value)):
                    raise ModelFormatError("tree references an unknown feature or has non-finite leaves")
            return GbdtModel(float(doc["init_score"]), trees, GbdtParams(**doc["params"]), scaler, names)
        if doc["kind"] == "logistic":
            return LogisticModel(np.asarray(doc["weights"], float), float(doc["bias"]), scaler, names,
                                 LogisticParams(**doc["params"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document ({exc})") from None
    raise ModelFormatError(f"unknown model kind {doc.get('kind')!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: corrupted model file ({exc.msg} at line {exc.lineno})") from None
    return model_from_dict(doc)
