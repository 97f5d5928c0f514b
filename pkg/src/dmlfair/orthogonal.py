"""Cross-fitted nuisance estimation and residualization.

Every target (the outcome plus each non-sensitive predictor column) gets K
fold models mapping the encoded sensitive features to that target. A row's
residual always comes from the model whose training folds excluded that row;
the out-of-fold predictions are cached so residualization never refits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import InputError
from .learners import FittedModel, LearnerSpec, derive_seed, fit
from .tabular import EncodedMatrix, FoldAssignment


@dataclass(frozen=True)
class NuisanceSet:
    """K fold models per target plus cached out-of-fold predictions."""

    targets: tuple[str, ...]
    outcome: str
    models: Mapping[str, tuple[FittedModel, ...]]
    learner: LearnerSpec
    folds: FoldAssignment | None = None
    oof: Mapping[str, np.ndarray] | None = None
    fold_train_rows: tuple[np.ndarray, ...] | None = None

    @property
    def k(self) -> int:
        return len(self.models[self.targets[0]])

    @property
    def predictor_targets(self) -> tuple[str, ...]:
        return tuple(t for t in self.targets if t != self.outcome)

    def models_for(self, target: str) -> tuple[FittedModel, ...]:
        if target not in self.models:
            raise InputError(f"unknown nuisance target {target!r}")
        return self.models[target]


@dataclass(frozen=True)
class Residuals:
    """Outcome and predictor components orthogonal to the sensitive features."""

    outcome: str
    y: np.ndarray
    x_names: tuple[str, ...]
    x: np.ndarray
    fold_of_row: np.ndarray

    def __post_init__(self):
        for arr in (self.y, self.x, self.fold_of_row):
            arr.flags.writeable = False


def crossfit_nuisance(
    d_enc: EncodedMatrix,
    targets: Mapping[str, np.ndarray],
    folds: FoldAssignment,
    learner: LearnerSpec,
    outcome: str | None = None,
) -> NuisanceSet:
    """Fit K models per target, each trained on the complement of one fold.

    `outcome` names which target is the outcome column (default: the first).
    With a single-fold assignment (diagnostics only) the one model per target
    is trained on, and predicts, all rows.
    """
    names = tuple(targets)
    if not names:
        raise InputError("no nuisance targets given")
    outcome = outcome if outcome is not None else names[0]
    if outcome not in names:
        raise InputError(f"outcome {outcome!r} is not among the targets")
    n = d_enc.n_rows
    vectors: dict[str, np.ndarray] = {}
    for name in names:
        vec = np.asarray(targets[name], dtype=np.float64)
        if vec.shape != (n,):
            raise InputError(f"target {name!r} has shape {vec.shape}, expected ({n},)")
        vectors[name] = vec
    if folds.n_rows != n:
        raise InputError(f"fold assignment covers {folds.n_rows} rows, data has {n}")

    k = folds.k
    train_rows: list[np.ndarray] = []
    for fold in range(k):
        rows = np.arange(n) if k == 1 else folds.rows_not_in_fold(fold)
        if rows.shape[0] < 2:
            raise InputError(
                f"fold {fold} leaves only {rows.shape[0]} training rows; use fewer folds"
            )
        train_rows.append(rows)

    models: dict[str, tuple[FittedModel, ...]] = {}
    oof: dict[str, np.ndarray] = {}
    for name in names:
        fold_models = []
        preds = np.empty(n)
        for fold in range(k):
            rows = train_rows[fold]
            spec = learner.with_seed(derive_seed(learner.seed, "nuisance", name, fold))
            model = fit(
                spec, d_enc.values[rows], vectors[name][rows],
                feature_names=d_enc.column_names,
            )
            held_out = np.arange(n) if k == 1 else folds.rows_in_fold(fold)
            preds[held_out] = model.predict(d_enc.values[held_out])
            fold_models.append(model)
        models[name] = tuple(fold_models)
        oof[name] = preds
    return NuisanceSet(
        targets=names,
        outcome=outcome,
        models=models,
        learner=learner,
        folds=folds,
        oof=oof,
        fold_train_rows=tuple(train_rows),
    )


def residualize(
    nuis: NuisanceSet,
    d_enc: EncodedMatrix,
    targets: Mapping[str, np.ndarray],
) -> Residuals:
    """Subtract each row's out-of-fold nuisance prediction from its target."""
    if nuis.oof is None or nuis.folds is None:
        raise InputError("this NuisanceSet has no cached out-of-fold predictions")
    n = d_enc.n_rows
    if nuis.folds.n_rows != n:
        raise InputError(f"NuisanceSet was built on {nuis.folds.n_rows} rows, data has {n}")
    if set(targets) != set(nuis.targets):
        raise InputError("targets do not match the NuisanceSet's target list")
    resid: dict[str, np.ndarray] = {}
    for name in nuis.targets:
        vec = np.asarray(targets[name], dtype=np.float64)
        if vec.shape != (n,):
            raise InputError(f"target {name!r} has shape {vec.shape}, expected ({n},)")
        resid[name] = vec - nuis.oof[name]
    x_names = nuis.predictor_targets
    x = (
        np.column_stack([resid[name] for name in x_names])
        if x_names
        else np.zeros((n, 0))
    )
    return Residuals(
        outcome=nuis.outcome,
        y=resid[nuis.outcome],
        x_names=x_names,
        x=x,
        fold_of_row=nuis.folds.fold_of_row.copy(),
    )


def nuisance_predict_avg(
    nuis: NuisanceSet, d_new: EncodedMatrix | np.ndarray, target: str
) -> np.ndarray:
    """Arithmetic mean of the K fold models' predictions on new rows."""
    fold_models = nuis.models_for(target)
    values = d_new.values if isinstance(d_new, EncodedMatrix) else np.asarray(d_new)
    acc = np.zeros(values.shape[0])
    for model in fold_models:
        acc += model.predict(values)
    return acc / len(fold_models)
