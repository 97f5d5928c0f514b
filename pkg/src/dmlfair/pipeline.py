"""The deployable fair-regression estimator.

`train` partials the sensitive columns out of the outcome and every
non-sensitive predictor with cross-fitted nuisance models, fits the final
regressor on the residuals, and caches the base-case offset used to recenter
predictions. `train_unaware` is the drop-the-sensitive-columns baseline, and
`train_regularized` blends the two objectives with a weight lambda.
"""

from __future__ import annotations

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import InputError, SchemaMismatchError
from .learners import (
    FittedModel,
    LearnerSpec,
    default_encoding_mode,
    derive_seed,
    fit,
)
from .orthogonal import NuisanceSet, Residuals, crossfit_nuisance, nuisance_predict_avg, residualize
from .persist import FORMAT_VERSION, pack_model, read_container, unpack_model, write_container
from .tabular import (
    CATEGORICAL,
    ColumnRole,
    Dataset,
    EncodedMatrix,
    FoldAssignment,
    Schema,
    assign_folds,
    coerce_value,
    encode_columns,
    encode_single,
    schema_from_json,
    schema_to_json,
)

RULE_NONE = "none"
RULE_MAX_FLOOR = "max_floor"
RULE_GROUP_BASE_CASE = "group_base_case"

PIPELINE_FORMAT = "dmlfair-pipeline"
UNAWARE_FORMAT = "dmlfair-unaware"


@dataclass(frozen=True)
class BaseCase:
    """Counterfactual reference profile: one value per sensitive column."""

    values: Mapping[str, object]

    def validated(self, schema: Schema, d_columns: tuple[str, ...]) -> dict[str, object]:
        out: dict[str, object] = {}
        for name in d_columns:
            if name not in self.values:
                raise InputError(f"base case is missing a value for sensitive column {name!r}")
            col = schema.column(name)
            value = self.values[name]
            coerce_value(col, value)  # raises InputError naming bad levels/values
            out[name] = value
        return out


@dataclass(frozen=True)
class RegularizedSpec:
    """Trade-off weight lambda in [0, 1] plus the shared learner family."""

    lam: float
    learner: LearnerSpec

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InputError(f"lambda must lie in [0, 1], got {self.lam}")


@dataclass(frozen=True)
class DecisionRule:
    kind: str
    group_column: str | None = None
    base_cases: Mapping[str, BaseCase] | None = None
    higher_is_better: bool = True

    def __post_init__(self):
        if self.kind not in (RULE_NONE, RULE_MAX_FLOOR, RULE_GROUP_BASE_CASE):
            raise InputError(f"unknown decision rule {self.kind!r}")
        if self.kind == RULE_GROUP_BASE_CASE and (
            self.group_column is None or self.base_cases is None
        ):
            raise InputError("group_base_case rule needs a group column and a base-case map")


@dataclass
class DmlFairModel:
    """Trained artifact: nuisance set, residual-space final model, base-case offset."""

    schema: Schema
    d_columns: tuple[str, ...]
    d_mode: str
    x_columns: tuple[str, ...]
    x_mode: str
    nuisance: NuisanceSet
    final: FittedModel
    base: BaseCase
    offset: float
    k: int
    seed: int

    @property
    def fingerprint(self) -> str:
        return self.schema.fingerprint()

    def offset_for(self, base: BaseCase) -> float:
        """Averaged outcome-nuisance prediction at a base-case profile."""
        values = base.validated(self.schema, self.d_columns)
        row = encode_single(self.schema, values, self.d_columns, self.d_mode)
        offset = float(nuisance_predict_avg(self.nuisance, row, self.nuisance.outcome)[0])
        if not math.isfinite(offset):
            raise InputError("base-case offset is not finite")
        return offset

    def residualize_inputs(self, data: Dataset) -> np.ndarray:
        """Predict-time X residuals via the averaged fold models."""
        d_enc = encode_columns(data, self.d_columns, self.d_mode)
        x_enc = encode_columns(data, self.x_columns, self.x_mode)
        if x_enc.column_names != self.nuisance.predictor_targets:
            raise SchemaMismatchError("encoded predictor columns do not match the trained model")
        preds = [
            nuisance_predict_avg(self.nuisance, d_enc, name)
            for name in self.nuisance.predictor_targets
        ]
        return x_enc.values - np.column_stack(preds)

    def predict(self, data: Dataset, relative: bool = False) -> np.ndarray:
        if data.schema.fingerprint() != self.fingerprint:
            raise SchemaMismatchError(
                "dataset schema does not match the schema this model was trained on"
            )
        rel = self.final.predict(self.residualize_inputs(data))
        return rel if relative else rel + self.offset

    def save(self, path: str | Path) -> None:
        arrays: dict[str, np.ndarray] = {}
        nuis = self.nuisance
        nuis_meta = {
            "targets": list(nuis.targets),
            "outcome": nuis.outcome,
            "learner": dataclasses.asdict(nuis.learner),
            "models": {
                target: [
                    pack_model(model, arrays, f"n{i}.f{fold}")
                    for fold, model in enumerate(nuis.models_for(target))
                ]
                for i, target in enumerate(nuis.targets)
            },
        }
        meta = {
            "format": PIPELINE_FORMAT,
            "version": FORMAT_VERSION,
            "schema": json.loads(schema_to_json(self.schema)),
            "d_columns": list(self.d_columns),
            "d_mode": self.d_mode,
            "x_columns": list(self.x_columns),
            "x_mode": self.x_mode,
            "nuisance": nuis_meta,
            "final": pack_model(self.final, arrays, "final"),
            "base": dict(self.base.values),
            "offset": self.offset,
            "k": self.k,
            "seed": self.seed,
        }
        write_container(path, meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "DmlFairModel":
        meta, arrays = read_container(path)
        if meta.get("format") != PIPELINE_FORMAT:
            raise InputError(f"{path}: not a {PIPELINE_FORMAT} file")
        nuis_meta = meta["nuisance"]
        models = {
            target: tuple(unpack_model(m, arrays) for m in entries)
            for target, entries in nuis_meta["models"].items()
        }
        nuisance = NuisanceSet(
            targets=tuple(nuis_meta["targets"]),
            outcome=nuis_meta["outcome"],
            models=models,
            learner=LearnerSpec(**nuis_meta["learner"]),
        )
        return cls(
            schema=schema_from_json(json.dumps(meta["schema"])),
            d_columns=tuple(meta["d_columns"]),
            d_mode=meta["d_mode"],
            x_columns=tuple(meta["x_columns"]),
            x_mode=meta["x_mode"],
            nuisance=nuisance,
            final=unpack_model(meta["final"], arrays),
            base=BaseCase(meta["base"]),
            offset=float(meta["offset"]),
            k=int(meta["k"]),
            seed=int(meta["seed"]),
        )


@dataclass
class UnawareModel:
    """Baseline trained on the raw non-sensitive predictors only."""

    schema: Schema
    x_columns: tuple[str, ...]
    x_mode: str
    model: FittedModel

    @property
    def fingerprint(self) -> str:
        return self.schema.fingerprint()

    def predict(self, data: Dataset) -> np.ndarray:
        if data.schema.fingerprint() != self.fingerprint:
            raise SchemaMismatchError(
                "dataset schema does not match the schema this model was trained on"
            )
        x_enc = encode_columns(data, self.x_columns, self.x_mode)
        return self.model.predict(x_enc)

    def save(self, path: str | Path) -> None:
        arrays: dict[str, np.ndarray] = {}
        meta = {
            "format": UNAWARE_FORMAT,
            "version": FORMAT_VERSION,
            "schema": json.loads(schema_to_json(self.schema)),
            "x_columns": list(self.x_columns),
            "x_mode": self.x_mode,
            "model": pack_model(self.model, arrays, "model"),
        }
        write_container(path, meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "UnawareModel":
        meta, arrays = read_container(path)
        if meta.get("format") != UNAWARE_FORMAT:
            raise InputError(f"{path}: not a {UNAWARE_FORMAT} file")
        return cls(
            schema=schema_from_json(json.dumps(meta["schema"])),
            x_columns=tuple(meta["x_columns"]),
            x_mode=meta["x_mode"],
            model=unpack_model(meta["model"], arrays),
        )


@dataclass
class RegularizedModel:
    """Single regressor minimizing the lambda-weighted raw/residual objective."""

    schema: Schema
    x_columns: tuple[str, ...]
    x_mode: str
    lam: float
    model: FittedModel

    def predict(self, data: Dataset) -> np.ndarray:
        if data.schema.fingerprint() != self.schema.fingerprint():
            raise SchemaMismatchError(
                "dataset schema does not match the schema this model was trained on"
            )
        return self.model.predict(encode_columns(data, self.x_columns, self.x_mode))


def warn_small_groups(data: Dataset, threshold: int = 50) -> list[tuple[str, str, int]]:
    """Sensitive levels with fewer rows than `threshold`; counterfactual quality
    degrades for small groups, so these are surfaced at train time."""
    flagged = []
    for col in data.schema.by_role(ColumnRole.SENSITIVE):
        if col.kind != CATEGORICAL:
            continue
        codes = data.column_values(col.name)
        for code, level in enumerate(col.levels):
            count = int(np.sum(codes == code))
            if count < threshold:
                flagged.append((col.name, level, count))
    return flagged


def _usable_sensitive_columns(data: Dataset) -> tuple[str, ...]:
    sensitive = [c.name for c in data.schema.by_role(ColumnRole.SENSITIVE)]
    if not sensitive:
        raise InputError("training needs at least one sensitive column")
    kept = []
    for name in sensitive:
        if np.unique(data.column_values(name)).size < 2:
            warnings.warn(
                f"sensitive column {name!r} takes a single value in the data; dropping it",
                stacklevel=3,
            )
        else:
            kept.append(name)
    if not kept:
        raise InputError("every sensitive column is degenerate; nothing to partial out")
    return tuple(kept)


def _check_folds(n: int, k: int, allow_single_fold: bool) -> None:
    if k < 1:
        raise InputError(f"fold count must be positive, got {k}")
    if k == 1 and not allow_single_fold:
        raise InputError(
            "k=1 disables cross-fitting and is valid only for diagnostics; "
            "pass allow_single_fold=True if that is really intended"
        )
    if n < 2 * k:
        raise InputError(f"need at least 2 rows per fold: n={n}, k={k}")
    if n < 10 * k:
        warnings.warn(f"only {n} rows for {k} folds; at least {10 * k} is recommended",
                      stacklevel=3)


def _residual_stage(
    data: Dataset,
    learner: LearnerSpec,
    k: int,
    seed: int,
    allow_single_fold: bool,
    x_mode: str,
) -> tuple[tuple[str, ...], EncodedMatrix, EncodedMatrix, dict[str, np.ndarray], NuisanceSet, Residuals]:
    """Shared nuisance + residualization path for train and train_regularized."""
    n = data.n_rows
    _check_folds(n, k, allow_single_fold)
    d_columns = _usable_sensitive_columns(data)
    x_columns = tuple(c.name for c in data.schema.by_role(ColumnRole.NON_SENSITIVE))
    if not x_columns:
        raise InputError("training needs at least one non-sensitive column")
    d_mode = default_encoding_mode(learner)
    d_enc = encode_columns(data, d_columns, d_mode)
    x_enc = encode_columns(data, x_columns, x_mode)
    outcome = data.schema.outcome.name
    targets: dict[str, np.ndarray] = {outcome: data.column_values(outcome)}
    for j, name in enumerate(x_enc.column_names):
        targets[name] = x_enc.values[:, j]
    folds = FoldAssignment.single_fold(n) if k == 1 else assign_folds(n, k, seed)
    nuis = crossfit_nuisance(
        d_enc, targets, folds,
        learner.with_seed(derive_seed(seed, "nuisance")),
        outcome=outcome,
    )
    res = residualize(nuis, d_enc, targets)
    return d_columns, d_enc, x_enc, targets, nuis, res


def train(
    data: Dataset,
    learner_nuisance: LearnerSpec,
    learner_final: LearnerSpec,
    k: int,
    base: BaseCase,
    seed: int = 0,
    *,
    allow_single_fold: bool = False,
    small_group_threshold: int = 50,
) -> DmlFairModel:
    """Cross-fit nuisances on the sensitive columns, fit the final model on the
    residuals, and cache the base-case recentering offset."""
    for col, level, count in warn_small_groups(data, small_group_threshold):
        warnings.warn(
            f"sensitive level {col}={level!r} has only {count} training rows; "
            "counterfactual estimates for this group will be noisy",
            stacklevel=2,
        )
    x_mode = default_encoding_mode(learner_final)
    d_columns, d_enc, x_enc, targets, nuis, res = _residual_stage(
        data, learner_nuisance, k, seed, allow_single_fold, x_mode
    )
    final = fit(
        learner_final.with_seed(derive_seed(seed, "final")),
        res.x, res.y, feature_names=res.x_names,
    )
    model = DmlFairModel(
        schema=data.schema,
        d_columns=d_columns,
        d_mode=d_enc.mode,
        x_columns=tuple(c.name for c in data.schema.by_role(ColumnRole.NON_SENSITIVE)),
        x_mode=x_mode,
        nuisance=nuis,
        final=final,
        base=base,
        offset=0.0,
        k=k,
        seed=seed,
    )
    model.offset = model.offset_for(base)
    return model


def predict(model: DmlFairModel, data: Dataset, relative: bool = False) -> np.ndarray:
    return model.predict(data, relative=relative)


def train_unaware(data: Dataset, learner: LearnerSpec, seed: int = 0) -> UnawareModel:
    """Baseline that simply omits the sensitive columns from the fit."""
    x_columns = tuple(c.name for c in data.schema.by_role(ColumnRole.NON_SENSITIVE))
    if not x_columns:
        raise InputError("training needs at least one non-sensitive column")
    x_mode = default_encoding_mode(learner)
    x_enc = encode_columns(data, x_columns, x_mode)
    y = data.column_values(data.schema.outcome.name)
    fitted = fit(learner.with_seed(derive_seed(seed, "unaware")), x_enc, y)
    return UnawareModel(schema=data.schema, x_columns=x_columns, x_mode=x_mode, model=fitted)


def train_regularized(
    data: Dataset,
    spec: RegularizedSpec,
    k: int,
    base: BaseCase | None = None,
    seed: int = 0,
    *,
    allow_single_fold: bool = False,
) -> RegularizedModel:
    """One model with shared parameters fit on the stacked sample
    {(X, Y) with weight 1-lambda} U {(X~, Y~) with weight lambda}.

    The endpoints reuse the exact unaware / final-stage code paths, so
    lambda=0 reproduces `train_unaware` and lambda=1 reproduces the final
    model of `train` bit for bit (given the same seed and learner).
    """
    lam = spec.lam
    x_columns = tuple(c.name for c in data.schema.by_role(ColumnRole.NON_SENSITIVE))
    x_mode = default_encoding_mode(spec.learner)
    if base is not None:
        base.validated(data.schema, _usable_sensitive_columns(data))
    if lam == 0.0:
        unaware = train_unaware(data, spec.learner, seed)
        return RegularizedModel(data.schema, x_columns, x_mode, lam, unaware.model)
    _, _, x_enc, targets, nuis, res = _residual_stage(
        data, spec.learner, k, seed, allow_single_fold, x_mode
    )
    if lam == 1.0:
        fitted = fit(
            spec.learner.with_seed(derive_seed(seed, "final")),
            res.x, res.y, feature_names=res.x_names,
        )
        return RegularizedModel(data.schema, x_columns, x_mode, lam, fitted)
    y = data.column_values(data.schema.outcome.name)
    x_stack = np.vstack([x_enc.values, res.x])
    y_stack = np.concatenate([y, res.y])
    weight = np.concatenate([
        np.full(data.n_rows, 1.0 - lam),
        np.full(data.n_rows, lam),
    ])
    fitted = fit(
        spec.learner.with_seed(derive_seed(seed, "regularized")),
        x_stack, y_stack, weight=weight, feature_names=x_enc.column_names,
    )
    return RegularizedModel(data.schema, x_columns, x_mode, lam, fitted)


def apply_decision_rule(
    rule: DecisionRule,
    dml_preds: np.ndarray,
    unaware_preds: np.ndarray | None = None,
    group_bc_preds: np.ndarray | None = None,
) -> np.ndarray:
    """Elementwise combination of the fair and baseline prediction vectors."""
    dml = np.asarray(dml_preds, dtype=np.float64)
    if rule.kind == RULE_NONE:
        return dml.copy()
    pick = np.maximum if rule.higher_is_better else np.minimum
    if rule.kind == RULE_MAX_FLOOR:
        other = unaware_preds
        label = "unaware_preds"
    else:
        other = group_bc_preds
        label = "group_bc_preds"
    if other is None:
        raise InputError(f"decision rule {rule.kind!r} requires {label}")
    other = np.asarray(other, dtype=np.float64)
    if other.shape != dml.shape:
        raise InputError(
            f"{label} has shape {other.shape}, expected {dml.shape}"
        )
    return pick(dml, other)


def group_base_case_predictions(
    model: DmlFairModel, data: Dataset, rule: DecisionRule
) -> np.ndarray:
    """Predictions recentred with each row's group-specific base case."""
    if rule.kind != RULE_GROUP_BASE_CASE:
        raise InputError("rule must be a group_base_case rule")
    col = model.schema.column(rule.group_column)
    if col.kind != CATEGORICAL:
        raise InputError(f"group column {rule.group_column!r} must be categorical")
    missing = [lv for lv in col.levels if lv not in rule.base_cases]
    if missing:
        raise InputError(
            f"base-case map is missing levels {missing} of {rule.group_column!r}"
        )
    offsets = {level: model.offset_for(bc) for level, bc in rule.base_cases.items()}
    rel = model.predict(data, relative=True)
    labels = data.labels(rule.group_column)
    return rel + np.asarray([offsets[level] for level in labels])
