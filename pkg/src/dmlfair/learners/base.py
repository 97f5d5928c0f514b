"""Common fitted-model surface shared by linear, tree, and forest regressors."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import InputError
from ..tabular import EncodedMatrix


def as_matrix(x: np.ndarray | EncodedMatrix) -> np.ndarray:
    values = x.values if isinstance(x, EncodedMatrix) else np.asarray(x, dtype=np.float64)
    if values.ndim != 2:
        raise InputError(f"design matrix must be 2-dimensional, got shape {values.shape}")
    return values


def as_vector(y: np.ndarray | Sequence[float]) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 1:
        raise InputError(f"target must be 1-dimensional, got shape {arr.shape}")
    return arr


class FittedModel:
    """Immutable trained regressor; prediction is a pure function of (model, rows)."""

    kind: str
    n_features: int
    feature_names: tuple[str, ...] | None

    def predict(self, x: np.ndarray | EncodedMatrix) -> np.ndarray:
        raise NotImplementedError

    def _check_width(self, values: np.ndarray) -> None:
        if values.shape[1] != self.n_features:
            raise InputError(
                f"{self.kind} model was trained on {self.n_features} features, "
                f"got {values.shape[1]}"
            )
