"""Learner specifications: one value object configures every supported regressor."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..errors import InputError
from ..tabular import DROP_FIRST, ONEHOT

LINEAR = "linear"
RIDGE = "ridge"
TREE = "tree"
FOREST = "forest"
_KINDS = (LINEAR, RIDGE, TREE, FOREST)


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    alpha: float = 0.0
    max_depth: int | None = None
    min_leaf: int = 5
    n_trees: int = 500
    mtry: int | None = None  # None: all features for a tree, ceil(p/3) for a forest
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown learner kind {self.kind!r}")
        if self.alpha < 0:
            raise InputError("ridge penalty must be non-negative")
        if self.min_leaf < 1:
            raise InputError("min_leaf must be at least 1")
        if self.n_trees < 1:
            raise InputError("n_trees must be at least 1")
        if self.mtry is not None and self.mtry < 1:
            raise InputError("mtry must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise InputError("max_depth must be non-negative")

    @classmethod
    def linear(cls) -> "LearnerSpec":
        return cls(LINEAR)

    @classmethod
    def ridge(cls, alpha: float) -> "LearnerSpec":
        return cls(RIDGE, alpha=alpha)

    @classmethod
    def tree(cls, max_depth: int | None = None, min_leaf: int = 5, seed: int = 0) -> "LearnerSpec":
        return cls(TREE, max_depth=max_depth, min_leaf=min_leaf, seed=seed)

    @classmethod
    def forest(
        cls,
        n_trees: int = 500,
        mtry: int | None = None,
        min_leaf: int = 5,
        seed: int = 0,
    ) -> "LearnerSpec":
        return cls(FOREST, n_trees=n_trees, mtry=mtry, min_leaf=min_leaf, seed=seed)

    def with_seed(self, seed: int) -> "LearnerSpec":
        return replace(self, seed=int(seed))

    def resolve_mtry(self, n_features: int) -> int:
        """Features considered per split; the regression-forest convention ceil(p/3)."""
        if self.mtry is None:
            return n_features if self.kind == TREE else max(1, math.ceil(n_features / 3))
        if self.mtry > n_features:
            raise InputError(f"mtry={self.mtry} exceeds feature count {n_features}")
        return self.mtry


def default_encoding_mode(spec: LearnerSpec) -> str:
    """Drop-first for linear-family learners (avoids exact collinearity with the
    intercept), full one-hot for tree-family learners."""
    return DROP_FIRST if spec.kind in (LINEAR, RIDGE) else ONEHOT
