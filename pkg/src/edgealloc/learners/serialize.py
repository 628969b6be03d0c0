"""Versioned JSON (de)serialisation for trained models.

The format is self-describing: every record carries a ``type`` tag and the
top-level file pins a schema version, so model files written by ``train``
can be consumed by ``allocate`` across releases.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import DataError
from .base import ConstantModel, GaussianNBModel, LogisticModel, TreeModel
from .ensembles import AdaBoostModel, BaggingModel, StackingModel

__all__ = ["MODEL_SCHEMA_VERSION", "model_from_dict", "save_bundle", "load_bundle"]

MODEL_SCHEMA_VERSION = 1


def model_from_dict(d: dict):
    kind = d.get("type")
    if kind in ("cart_tree", "random_tree"):
        return TreeModel.from_dict(d)
    if kind == "gaussian_nb":
        return GaussianNBModel.from_dict(d)
    if kind == "logistic":
        return LogisticModel.from_dict(d)
    if kind == "constant":
        return ConstantModel.from_dict(d)
    if kind == "adaboost":
        return AdaBoostModel(
            [model_from_dict(m) for m in d["members"]], d["alphas"], d["n_features"]
        )
    if kind == "bagging":
        return BaggingModel([model_from_dict(m) for m in d["members"]], d["n_features"])
    if kind == "stacking":
        return StackingModel(
            [model_from_dict(b) for b in d["bases"]],
            model_from_dict(d["meta"]),
            d["n_features"],
        )
    raise DataError(f"unknown model type {kind!r}")


def save_bundle(path, models: dict, metadata: dict | None = None) -> None:
    """Write named models to one JSON file (e.g. boost / bagging / stacking)."""
    payload = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "models": {name: m.to_dict() for name, m in models.items()},
        "metadata": metadata or {},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_bundle(path) -> tuple:
    """Read a model file; returns ({name: model}, metadata)."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    version = payload.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise DataError(
            f"model file {path} has schema version {version}, expected {MODEL_SCHEMA_VERSION}"
        )
    models = {name: model_from_dict(d) for name, d in payload["models"].items()}
    return models, payload.get("metadata", {})
