"""Regression learners behind one fit/predict surface.

`fit(spec, x, y)` dispatches to the linear, ridge, tree, or forest fitter;
every result is an immutable FittedModel whose predictions are a pure
function of (model, rows).
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..errors import InputError
from .base import FittedModel, as_matrix, as_vector
from .forest import ForestModel, fit_forest
from .linear import LinearModel, fit_linear
from .spec import FOREST, LINEAR, RIDGE, TREE, LearnerSpec, default_encoding_mode
from .tree import TreeModel, fit_tree

__all__ = [
    "FittedModel", "LinearModel", "TreeModel", "ForestModel", "LearnerSpec",
    "fit", "fit_linear", "fit_tree", "fit_forest",
    "default_encoding_mode", "derive_seed",
    "LINEAR", "RIDGE", "TREE", "FOREST",
]


def derive_seed(base: int, *tokens: str | int) -> int:
    """Stable child seed from a base seed and a path of names/indices."""
    parts = [int(base) & 0xFFFFFFFF]
    for token in tokens:
        if isinstance(token, str):
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            parts.append(int.from_bytes(digest[:4], "big"))
        else:
            parts.append(int(token) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(parts).generate_state(1, np.uint32)[0])


def fit(
    spec: LearnerSpec,
    x,
    y,
    *,
    weight: np.ndarray | None = None,
    feature_names: tuple[str, ...] | None = None,
) -> FittedModel:
    if spec.kind in (LINEAR, RIDGE):
        return fit_linear(x, y, penalty=spec.alpha, weight=weight, feature_names=feature_names)
    if spec.kind == TREE:
        return fit_tree(
            x, y, max_depth=spec.max_depth, min_leaf=spec.min_leaf,
            seed=spec.seed, weight=weight, feature_names=feature_names,
        )
    if spec.kind == FOREST:
        return fit_forest(x, y, spec, weight=weight, feature_names=feature_names)
    raise InputError(f"unknown learner kind {spec.kind!r}")
