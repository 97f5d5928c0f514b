"""Single CART regression tree over a flat node-array representation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import InputError
from ..tabular import EncodedMatrix
from . import _kernels
from .base import FittedModel, as_matrix, as_vector

_UNBOUNDED_DEPTH = 2**31 - 1


def node_capacity(n_rows: int, min_leaf: int, max_depth: int | None) -> int:
    """Upper bound on node count: every leaf keeps at least min_leaf rows."""
    by_leaves = 2 * max(1, n_rows // max(min_leaf, 1)) + 1
    if max_depth is not None and max_depth < 40:
        return min(by_leaves, 2 ** (max_depth + 1) + 1)
    return by_leaves


@dataclass(frozen=True)
class TreeModel(FittedModel):
    kind: str
    feature: np.ndarray  # int32, -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # mean of training targets reaching the node
    count: np.ndarray
    n_features: int
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        for arr in (self.feature, self.threshold, self.left, self.right, self.value, self.count):
            arr.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max()) if self.n_nodes else 0

    def predict(self, x: np.ndarray | EncodedMatrix) -> np.ndarray:
        values = as_matrix(x)
        self._check_width(values)
        out = np.empty(values.shape[0])
        _kernels.tree_predict(
            np.ascontiguousarray(values),
            self.feature, self.threshold, self.left, self.right, self.value, out,
        )
        return out


def fit_tree(
    x: np.ndarray | EncodedMatrix,
    y: np.ndarray,
    max_depth: int | None = None,
    min_leaf: int = 1,
    feature_subset: Sequence[int] | None = None,
    seed: int = 0,
    *,
    weight: np.ndarray | None = None,
    feature_names: tuple[str, ...] | None = None,
) -> TreeModel:
    """Greedy SSE-minimizing CART fit.

    Recursion stops at max_depth, when a split would leave a child below
    min_leaf rows, or on a zero-variance node. All features in
    `feature_subset` (default: all columns) are searched at every split.
    """
    values = np.ascontiguousarray(as_matrix(x))
    target = as_vector(y)
    if isinstance(x, EncodedMatrix) and feature_names is None:
        feature_names = x.column_names
    n, p = values.shape
    if n == 0:
        raise InputError("cannot fit a tree on zero rows")
    if n != target.shape[0]:
        raise InputError(f"x has {n} rows but y has {target.shape[0]}")
    if min_leaf < 1:
        raise InputError("min_leaf must be at least 1")
    if feature_subset is None:
        pool = np.arange(p, dtype=np.int64)
    else:
        pool = np.unique(np.asarray(feature_subset, dtype=np.int64))
        if pool.size == 0 or pool.min() < 0 or pool.max() >= p:
            raise InputError(f"feature_subset must index into [0, {p})")
    if weight is None:
        w = np.ones(n)
    else:
        w = as_vector(weight)
        if w.shape[0] != n:
            raise InputError("weight length must match row count")
        if np.any(w < 0) or not np.any(w > 0):
            raise InputError("weights must be non-negative with positive total")

    depth = _UNBOUNDED_DEPTH if max_depth is None else int(max_depth)
    cap = node_capacity(n, min_leaf, max_depth)
    feat = np.empty(cap, dtype=np.int32)
    thr = np.zeros(cap)
    left = np.zeros(cap, dtype=np.int32)
    right = np.zeros(cap, dtype=np.int32)
    value = np.empty(cap)
    count = np.empty(cap, dtype=np.int32)
    idx = np.arange(n, dtype=np.int64)
    n_nodes = _kernels.build_tree(
        values, target, w, idx, pool, pool.shape[0], depth, min_leaf,
        np.uint64(seed), feat, thr, left, right, value, count,
    )
    return TreeModel(
        kind="tree",
        feature=feat[:n_nodes].copy(),
        threshold=thr[:n_nodes].copy(),
        left=left[:n_nodes].copy(),
        right=right[:n_nodes].copy(),
        value=value[:n_nodes].copy(),
        count=count[:n_nodes].copy(),
        n_features=p,
        feature_names=feature_names,
    )
