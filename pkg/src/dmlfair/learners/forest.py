"""Bagged CART forest with per-split feature sampling.

Trees are stored concatenated in flat arrays with per-tree offsets, which
keeps fitting, prediction, and persistence allocation-light. Tree t's
randomness derives only from (spec.seed, t), so fits are reproducible under
any thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..tabular import EncodedMatrix
from . import _kernels
from .base import FittedModel, as_matrix, as_vector
from .spec import FOREST, LearnerSpec
from .tree import TreeModel, node_capacity


@dataclass(frozen=True)
class ForestModel(FittedModel):
    kind: str
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    offsets: np.ndarray  # offsets[t] .. offsets[t+1] delimit tree t's nodes
    n_features: int
    spec: LearnerSpec
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        arrays = (self.feature, self.threshold, self.left, self.right,
                  self.value, self.count, self.offsets)
        for arr in arrays:
            arr.flags.writeable = False

    @property
    def n_trees(self) -> int:
        return self.offsets.shape[0] - 1

    def tree(self, t: int) -> TreeModel:
        lo, hi = int(self.offsets[t]), int(self.offsets[t + 1])
        return TreeModel(
            kind="tree",
            feature=self.feature[lo:hi].copy(),
            threshold=self.threshold[lo:hi].copy(),
            left=self.left[lo:hi].copy(),
            right=self.right[lo:hi].copy(),
            value=self.value[lo:hi].copy(),
            count=self.count[lo:hi].copy(),
            n_features=self.n_features,
            feature_names=self.feature_names,
        )

    def predict(self, x: np.ndarray | EncodedMatrix) -> np.ndarray:
        values = np.ascontiguousarray(as_matrix(x))
        self._check_width(values)
        out = np.empty(values.shape[0])
        _kernels.forest_predict(
            values, self.feature, self.threshold, self.left, self.right,
            self.value, self.offsets, out,
        )
        return out

    def predict_per_tree(self, x: np.ndarray | EncodedMatrix) -> np.ndarray:
        """Per-tree predictions, shape (n_trees, n_rows)."""
        values = np.ascontiguousarray(as_matrix(x))
        self._check_width(values)
        out = np.empty((self.n_trees, values.shape[0]))
        _kernels.forest_predict_per_tree(
            values, self.feature, self.threshold, self.left, self.right,
            self.value, self.offsets, out,
        )
        return out


def fit_forest(
    x: np.ndarray | EncodedMatrix,
    y: np.ndarray,
    spec: LearnerSpec,
    *,
    bootstrap: bool = True,
    weight: np.ndarray | None = None,
    feature_names: tuple[str, ...] | None = None,
) -> ForestModel:
    """Fit spec.n_trees trees, each on a with-replacement resample of all rows
    (unless `bootstrap=False`, a hook for equivalence tests) with spec-resolved
    mtry features considered per split.
    """
    if spec.kind != FOREST:
        raise InputError(f"fit_forest needs a forest spec, got {spec.kind!r}")
    values = np.ascontiguousarray(as_matrix(x))
    target = as_vector(y)
    if isinstance(x, EncodedMatrix) and feature_names is None:
        feature_names = x.column_names
    n, p = values.shape
    if n == 0:
        raise InputError("cannot fit a forest on zero rows")
    if n != target.shape[0]:
        raise InputError(f"x has {n} rows but y has {target.shape[0]}")
    if weight is None:
        w = np.ones(n)
    else:
        w = as_vector(weight)
        if w.shape[0] != n:
            raise InputError("weight length must match row count")
        if np.any(w < 0) or not np.any(w > 0):
            raise InputError("weights must be non-negative with positive total")
    mtry = spec.resolve_mtry(p)
    max_depth = _depth_or_unbounded(spec.max_depth)
    max_nodes = node_capacity(n, spec.min_leaf, spec.max_depth)
    n_trees = spec.n_trees

    feat = np.empty(n_trees * max_nodes, dtype=np.int32)
    thr = np.zeros(n_trees * max_nodes)
    left = np.zeros(n_trees * max_nodes, dtype=np.int32)
    right = np.zeros(n_trees * max_nodes, dtype=np.int32)
    value = np.empty(n_trees * max_nodes)
    count = np.empty(n_trees * max_nodes, dtype=np.int32)
    sizes = np.empty(n_trees, dtype=np.int64)
    _kernels.build_forest(
        values, target, w, n_trees, mtry, max_depth, spec.min_leaf,
        np.uint64(spec.seed), bootstrap, max_nodes,
        feat, thr, left, right, value, count, sizes,
    )

    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    total = int(offsets[-1])
    cfeat = np.empty(total, dtype=np.int32)
    cthr = np.empty(total)
    cleft = np.empty(total, dtype=np.int32)
    cright = np.empty(total, dtype=np.int32)
    cvalue = np.empty(total)
    ccount = np.empty(total, dtype=np.int32)
    for t in range(n_trees):
        src = slice(t * max_nodes, t * max_nodes + int(sizes[t]))
        dst = slice(int(offsets[t]), int(offsets[t + 1]))
        cfeat[dst] = feat[src]
        cthr[dst] = thr[src]
        cleft[dst] = left[src]
        cright[dst] = right[src]
        cvalue[dst] = value[src]
        ccount[dst] = count[src]
    return ForestModel(
        kind="forest",
        feature=cfeat, threshold=cthr, left=cleft, right=cright,
        value=cvalue, count=ccount, offsets=offsets,
        n_features=p, spec=spec, feature_names=feature_names,
    )


def _depth_or_unbounded(max_depth: int | None) -> int:
    return 2**31 - 1 if max_depth is None else int(max_depth)
