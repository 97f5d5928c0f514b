"""Fairness evaluation: group statistics, counterfactual-error reports,
bootstrap intervals, and surrogate trees explaining who an adjustment helps.

Standard deviations are sample (n-1) throughout; a single observation has
sd 0 by convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InputError
from .learners import TreeModel, fit_tree
from .tabular import ColumnRole, Dataset, ONEHOT, encode_columns


def _sample_sd(values: np.ndarray) -> float:
    if values.shape[0] < 2:
        return 0.0
    return float(np.std(values, ddof=1))


@dataclass(frozen=True)
class GroupStats:
    group: str
    count: int
    mean: float
    half_width: float  # normal-approximation 95% interval: 1.96 * sd / sqrt(n)


def group_stats(
    preds: np.ndarray,
    groups: Sequence[str],
    level_order: Sequence[str] | None = None,
) -> list[GroupStats]:
    """Per-level mean and 95% half-width of the predictions.

    Levels appear in `level_order` when given (only those present), otherwise
    sorted. Empty groups are omitted.
    """
    values = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(groups)
    if labels.shape[0] == 0:
        raise InputError("empty group vector")
    if labels.shape[0] != values.shape[0]:
        raise InputError("predictions and groups must have equal length")
    present = set(labels.tolist())
    if level_order is not None:
        ordered = [lv for lv in level_order if lv in present]
    else:
        ordered = sorted(str(lv) for lv in present)
    out = []
    for level in ordered:
        sel = values[labels == level]
        out.append(
            GroupStats(
                group=str(level),
                count=int(sel.shape[0]),
                mean=float(sel.mean()),
                half_width=1.96 * _sample_sd(sel) / np.sqrt(sel.shape[0]),
            )
        )
    return out


@dataclass(frozen=True)
class CfErrorReport:
    """Per-row prediction(factual) - prediction(counterfactual) for a subgroup."""

    subgroup: str
    errors: np.ndarray
    mean: float
    sd: float
    count: int

    def __post_init__(self):
        self.errors.flags.writeable = False


def cf_error(
    preds_factual: np.ndarray,
    preds_counterfactual: np.ndarray,
    subgroup_mask: np.ndarray,
    name: str = "subgroup",
) -> CfErrorReport:
    factual = np.asarray(preds_factual, dtype=np.float64)
    counterfactual = np.asarray(preds_counterfactual, dtype=np.float64)
    mask = np.asarray(subgroup_mask, dtype=bool)
    if factual.shape != counterfactual.shape or factual.shape != mask.shape:
        raise InputError("factual, counterfactual, and mask must have equal length")
    if not mask.any():
        raise InputError(f"subgroup {name!r} selects no rows")
    errors = factual[mask] - counterfactual[mask]
    return CfErrorReport(
        subgroup=name,
        errors=errors,
        mean=float(errors.mean()),
        sd=_sample_sd(errors),
        count=int(errors.shape[0]),
    )


def bootstrap_ci(
    statistic: Callable[[np.ndarray], float],
    data: np.ndarray,
    b: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile 2.5/97.5 interval of `statistic` over b row-resamples.

    Resample i draws from a stream seeded by (seed, i), so growing b keeps
    the earlier resamples unchanged.
    """
    if b < 100:
        raise InputError(f"bootstrap needs at least 100 resamples, got {b}")
    values = np.asarray(data, dtype=np.float64)
    n = values.shape[0]
    if n == 0:
        raise InputError("cannot bootstrap an empty sample")
    stats = np.empty(b)
    for i in range(b):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), i)))
        stats[i] = statistic(values[rng.integers(0, n, size=n)])
    lo, hi = np.percentile(stats, [2.5, 97.5])
    return float(lo), float(hi)


@dataclass(frozen=True)
class AdjustmentTree:
    """Surrogate CART over original features explaining a prediction delta."""

    tree: TreeModel
    feature_names: tuple[str, ...]
    max_depth: int
    n_rows: int

    def to_dict(self) -> dict:
        def node(i: int) -> dict:
            entry = {"n": int(self.tree.count[i]), "mean": float(self.tree.value[i])}
            if self.tree.feature[i] >= 0:
                entry["feature"] = self.feature_names[self.tree.feature[i]]
                entry["threshold"] = float(self.tree.threshold[i])
                entry["left"] = node(int(self.tree.left[i]))
                entry["right"] = node(int(self.tree.right[i]))
            return entry

        return node(0)

    def render(self) -> str:
        lines: list[str] = []

        def walk(i: int, indent: str, label: str) -> None:
            n = int(self.tree.count[i])
            mean = float(self.tree.value[i])
            if self.tree.feature[i] < 0:
                lines.append(f"{indent}{label}leaf: mean={mean:+.4f} n={n}")
                return
            name = self.feature_names[self.tree.feature[i]]
            thr = float(self.tree.threshold[i])
            lines.append(f"{indent}{label}{name} <= {thr:.4g} (mean={mean:+.4f} n={n})")
            walk(int(self.tree.left[i]), indent + "  ", "yes: ")
            walk(int(self.tree.right[i]), indent + "  ", "no:  ")

        walk(0, "", "")
        return "\n".join(lines)


def adjustment_tree(
    data: Dataset,
    delta: np.ndarray,
    subgroup_mask: np.ndarray | None = None,
    max_depth: int = 6,
    min_leaf: int = 5,
) -> AdjustmentTree:
    """CART surrogate fit on the masked rows' original (pre-residualization)
    features, targeting the given delta (e.g. unaware minus fair predictions)."""
    target = np.asarray(delta, dtype=np.float64)
    if target.shape[0] != data.n_rows:
        raise InputError("delta must align with the dataset rows")
    if subgroup_mask is None:
        mask = np.ones(data.n_rows, dtype=bool)
    else:
        mask = np.asarray(subgroup_mask, dtype=bool)
        if mask.shape[0] != data.n_rows:
            raise InputError("subgroup mask must align with the dataset rows")
    rows = np.flatnonzero(mask)
    if rows.shape[0] < 2 * min_leaf:
        raise InputError(
            f"subgroup has {rows.shape[0]} rows; need at least {2 * min_leaf} to fit a tree"
        )
    feature_cols = [
        c.name
        for c in data.schema.columns
        if c.role in (ColumnRole.SENSITIVE, ColumnRole.NON_SENSITIVE)
    ]
    enc = encode_columns(data.take(rows), feature_cols, ONEHOT)
    tree = fit_tree(
        enc, target[rows], max_depth=max_depth, min_leaf=min_leaf,
        feature_names=enc.column_names,
    )
    return AdjustmentTree(
        tree=tree,
        feature_names=enc.column_names,
        max_depth=max_depth,
        n_rows=int(rows.shape[0]),
    )
