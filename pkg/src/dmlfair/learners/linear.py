"""Least-squares learners: OLS via pivoted QR and ridge via normal equations.

The intercept is always present and never penalized. With zero penalty a
rank-deficient design is an error rather than a silent pseudo-inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import InputError, SingularityError
from ..tabular import EncodedMatrix
from .base import FittedModel, as_matrix, as_vector

_PIVOT_RTOL = 1e-10


@dataclass(frozen=True)
class LinearModel(FittedModel):
    kind: str
    intercept: float
    coef: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.coef.flags.writeable = False

    @property
    def n_features(self) -> int:
        return self.coef.shape[0]

    def predict(self, x: np.ndarray | EncodedMatrix) -> np.ndarray:
        values = as_matrix(x)
        self._check_width(values)
        return values @ self.coef + self.intercept


def fit_linear(
    x: np.ndarray | EncodedMatrix,
    y: np.ndarray,
    penalty: float = 0.0,
    *,
    weight: np.ndarray | None = None,
    feature_names: tuple[str, ...] | None = None,
) -> LinearModel:
    """Minimize sum of squared residuals plus penalty * ||coef||^2.

    With penalty 0 this is exact OLS; rank deficiency (relative pivot below
    1e-10) raises SingularityError.
    """
    values = as_matrix(x)
    target = as_vector(y)
    if isinstance(x, EncodedMatrix) and feature_names is None:
        feature_names = x.column_names
    n, p = values.shape
    if n != target.shape[0]:
        raise InputError(f"x has {n} rows but y has {target.shape[0]}")
    if n < 2:
        raise InputError(f"need at least 2 rows to fit, got {n}")
    if penalty < 0:
        raise InputError("penalty must be non-negative")

    design = np.column_stack([np.ones(n), values])
    rhs = target
    if weight is not None:
        w = as_vector(weight)
        if w.shape[0] != n:
            raise InputError("weight length must match row count")
        if np.any(w < 0) or not np.any(w > 0):
            raise InputError("weights must be non-negative with positive total")
        sw = np.sqrt(w)
        design = design * sw[:, None]
        rhs = rhs * sw

    if penalty == 0.0:
        q, r, piv = scipy.linalg.qr(design, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        if diag[0] == 0.0 or np.any(diag < _PIVOT_RTOL * diag[0]):
            raise SingularityError(
                "design matrix is rank deficient; drop collinear columns or use a ridge penalty"
            )
        beta_piv = scipy.linalg.solve_triangular(r, q.T @ rhs)
        beta = np.empty_like(beta_piv)
        beta[piv] = beta_piv
    else:
        gram = design.T @ design
        gram[1:, 1:] += penalty * np.eye(p)  # intercept unpenalized
        try:
            cho = scipy.linalg.cho_factor(gram)
            beta = scipy.linalg.cho_solve(cho, design.T @ rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularityError(f"normal equations not positive definite: {exc}") from exc

    return LinearModel(
        kind="ridge" if penalty > 0 else "linear",
        intercept=float(beta[0]),
        coef=np.ascontiguousarray(beta[1:]),
        feature_names=feature_names,
    )
