"""Versioned model persistence.

Container format: a compressed .npz holding one `__meta__` JSON document plus
the model's numeric arrays under dotted keys. Floats are stored as binary
float64, so a reloaded model reproduces predictions exactly.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import InputError
from .learners import FittedModel, ForestModel, LearnerSpec, LinearModel, TreeModel

FORMAT_NAME = "dmlfair-model"
FORMAT_VERSION = 1


def pack_model(model: FittedModel, arrays: dict[str, np.ndarray], prefix: str) -> dict:
    """Describe `model` as JSON-ready meta, depositing its arrays under `prefix`."""
    if isinstance(model, LinearModel):
        arrays[f"{prefix}.coef"] = model.coef
        return {
            "type": "linear",
            "kind": model.kind,
            "intercept": model.intercept,
            "feature_names": list(model.feature_names) if model.feature_names else None,
            "arrays": f"{prefix}.coef",
        }
    if isinstance(model, TreeModel):
        for name in ("feature", "threshold", "left", "right", "value", "count"):
            arrays[f"{prefix}.{name}"] = getattr(model, name)
        return {
            "type": "tree",
            "n_features": model.n_features,
            "feature_names": list(model.feature_names) if model.feature_names else None,
            "arrays": prefix,
        }
    if isinstance(model, ForestModel):
        for name in ("feature", "threshold", "left", "right", "value", "count", "offsets"):
            arrays[f"{prefix}.{name}"] = getattr(model, name)
        return {
            "type": "forest",
            "n_features": model.n_features,
            "feature_names": list(model.feature_names) if model.feature_names else None,
            "spec": dataclasses.asdict(model.spec),
            "arrays": prefix,
        }
    raise InputError(f"cannot persist model of type {type(model).__name__}")


def unpack_model(meta: dict, arrays: Mapping[str, np.ndarray]) -> FittedModel:
    names = meta.get("feature_names")
    feature_names = tuple(names) if names else None
    if meta["type"] == "linear":
        return LinearModel(
            kind=meta["kind"],
            intercept=float(meta["intercept"]),
            coef=np.array(arrays[meta["arrays"]], dtype=np.float64),
            feature_names=feature_names,
        )
    prefix = meta["arrays"]
    fields = {
        name: np.array(arrays[f"{prefix}.{name}"])
        for name in ("feature", "threshold", "left", "right", "value", "count")
    }
    if meta["type"] == "tree":
        return TreeModel(
            kind="tree", n_features=int(meta["n_features"]),
            feature_names=feature_names, **fields,
        )
    if meta["type"] == "forest":
        return ForestModel(
            kind="forest", n_features=int(meta["n_features"]),
            offsets=np.array(arrays[f"{prefix}.offsets"]),
            spec=LearnerSpec(**meta["spec"]),
            feature_names=feature_names, **fields,
        )
    raise InputError(f"unknown persisted model type {meta['type']!r}")


def write_container(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Atomically write a meta+arrays container (temp file then rename)."""
    path = Path(path)
    payload = dict(arrays)
    payload["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez_compressed(fh, **payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(path) as bundle:
        arrays = {k: bundle[k] for k in bundle.files if k != "__meta__"}
        meta = json.loads(bundle["__meta__"].tobytes().decode("utf-8"))
    return meta, arrays


def save_model(model: FittedModel, path: str | Path) -> None:
    arrays: dict[str, np.ndarray] = {}
    model_meta = pack_model(model, arrays, "model")
    meta = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "model": model_meta}
    write_container(path, meta, arrays)


def load_model(path: str | Path) -> FittedModel:
    meta, arrays = read_container(path)
    if meta.get("format") != FORMAT_NAME:
        raise InputError(f"{path}: not a {FORMAT_NAME} file")
    if meta.get("version") != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported version {meta.get('version')}")
    return unpack_model(meta["model"], arrays)
