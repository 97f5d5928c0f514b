"""Columnar data model: role-tagged schemas, CSV ingestion, one-hot encoding, fold assignment.

A Dataset stores numeric/ordinal/boolean columns as float64 arrays and
categorical columns as integer codes into the schema's declared level list.
All containers are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, ParseError, SchemaMismatchError

NUMERIC = "numeric"
ORDINAL = "ordinal"
BOOLEAN = "boolean"
CATEGORICAL = "categorical"
_KINDS = (NUMERIC, ORDINAL, BOOLEAN, CATEGORICAL)

ONEHOT = "onehot"
DROP_FIRST = "drop_first"

_TRUE_TOKENS = {"TRUE", "True", "true", "1"}
_FALSE_TOKENS = {"FALSE", "False", "false", "0"}


class ColumnRole(Enum):
    SENSITIVE = "sensitive"
    NON_SENSITIVE = "non_sensitive"
    OUTCOME = "outcome"
    IDENTIFIER = "identifier"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    role: ColumnRole = ColumnRole.NON_SENSITIVE
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown column kind {self.kind!r} for column {self.name!r}")
        if self.kind == CATEGORICAL:
            if not self.levels:
                raise InputError(f"categorical column {self.name!r} needs a non-empty level list")
            if len(set(self.levels)) != len(self.levels):
                raise InputError(f"categorical column {self.name!r} has duplicate levels")
        elif self.levels:
            raise InputError(f"column {self.name!r} of kind {self.kind} must not declare levels")


@dataclass(frozen=True)
class Schema:
    """Ordered column declarations. Exactly one outcome column is required."""

    columns: tuple[Column, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise InputError("schema column names must be unique")
        n_outcome = sum(1 for c in self.columns if c.role is ColumnRole.OUTCOME)
        if n_outcome != 1:
            raise InputError(f"schema must declare exactly one outcome column, got {n_outcome}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise InputError(f"unknown column {name!r}")

    def by_role(self, role: ColumnRole) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.role is role)

    @property
    def outcome(self) -> Column:
        return self.by_role(ColumnRole.OUTCOME)[0]

    def fingerprint(self) -> str:
        """Stable hash of the full schema (names, kinds, levels, roles)."""
        return hashlib.sha256(schema_to_json(self).encode("utf-8")).hexdigest()


def schema_to_json(schema: Schema) -> str:
    cols = []
    for c in schema.columns:
        entry: dict = {"name": c.name, "kind": c.kind, "role": c.role.value}
        if c.kind == CATEGORICAL:
            entry["levels"] = list(c.levels)
        cols.append(entry)
    return json.dumps({"columns": cols}, indent=2, sort_keys=False)


def schema_from_json(text: str) -> Schema:
    try:
        raw = json.loads(text)
        cols = tuple(
            Column(
                name=e["name"],
                kind=e["kind"],
                role=ColumnRole(e.get("role", "non_sensitive")),
                levels=tuple(e.get("levels", ())),
            )
            for e in raw["columns"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed schema document: {exc}") from exc
    return Schema(cols)


def law_school_schema(age_sensitive: bool = False) -> Schema:
    """Schema for the standard law-school GPA table.

    gender and race1 are sensitive; `age_sensitive=True` additionally
    protects age. ugpa is the outcome.
    """
    s = ColumnRole.SENSITIVE
    ns = ColumnRole.NON_SENSITIVE
    return Schema(
        (
            Column("age", ORDINAL, s if age_sensitive else ns),
            Column("decile1", ORDINAL, ns),
            Column("decile3", ORDINAL, ns),
            Column("fam_inc", ORDINAL, ns),
            Column("lsat", NUMERIC, ns),
            Column("ugpa", NUMERIC, ColumnRole.OUTCOME),
            Column("gender", CATEGORICAL, s, levels=("female", "male")),
            Column("race1", CATEGORICAL, s, levels=("asian", "black", "hisp", "other", "white")),
            Column("cluster", ORDINAL, ns),
            Column("fulltime", BOOLEAN, ns),
            Column("bar", BOOLEAN, ns),
        )
    )


class Dataset:
    """Immutable column store bound to a Schema.

    Non-categorical columns are float64; categorical columns are int32 codes
    into the declared level list.
    """

    def __init__(self, schema: Schema, columns: Mapping[str, np.ndarray]):
        if set(columns) != set(schema.names):
            missing = set(schema.names) - set(columns)
            extra = set(columns) - set(schema.names)
            raise SchemaMismatchError(
                f"dataset columns do not match schema (missing={sorted(missing)}, extra={sorted(extra)})"
            )
        self.schema = schema
        store: dict[str, np.ndarray] = {}
        n = None
        for col in schema.columns:
            arr = np.asarray(columns[col.name])
            if col.kind == CATEGORICAL:
                arr = arr.astype(np.int32, copy=True)
                if arr.size and (arr.min() < 0 or arr.max() >= len(col.levels)):
                    raise InputError(f"categorical codes out of range for column {col.name!r}")
            else:
                arr = arr.astype(np.float64, copy=True)
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise InputError("all dataset columns must have the same length")
            arr.flags.writeable = False
            store[col.name] = arr
        self._columns = store
        self.n_rows = 0 if n is None else int(n)

    def column_values(self, name: str) -> np.ndarray:
        """Raw storage: floats for numeric-like columns, int codes for categoricals."""
        if name not in self._columns:
            raise InputError(f"unknown column {name!r}")
        return self._columns[name]

    def labels(self, name: str) -> np.ndarray:
        """Categorical column decoded back to its level strings."""
        col = self.schema.column(name)
        if col.kind != CATEGORICAL:
            raise InputError(f"column {name!r} is not categorical")
        return np.asarray(col.levels, dtype=object)[self._columns[name]]

    def take(self, rows: np.ndarray | Sequence[int]) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.schema, {k: v[rows] for k, v in self._columns.items()})

    def equals(self, other: "Dataset") -> bool:
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        return all(np.array_equal(self._columns[k], other._columns[k]) for k in self._columns)

    @classmethod
    def from_rows(cls, schema: Schema, rows: Sequence[Mapping[str, object]]) -> "Dataset":
        """Build a Dataset from per-row value mappings (levels given as strings)."""
        cols: dict[str, list] = {c.name: [] for c in schema.columns}
        for i, row in enumerate(rows):
            for c in schema.columns:
                if c.name not in row:
                    raise InputError(f"row {i + 1} is missing column {c.name!r}")
                cols[c.name].append(_coerce_value(c, row[c.name], row_number=i + 1))
        arrays = {name: np.asarray(vals) for name, vals in cols.items()}
        return cls(schema, arrays)


def coerce_value(col: Column, value: object, row_number: int | None = None) -> float | int:
    """Validate and convert one in-memory value for `col` (levels as strings,
    numerics as anything float() accepts). Categoricals return codes."""
    where = f" at row {row_number}" if row_number is not None else ""
    if col.kind == CATEGORICAL:
        if isinstance(value, (int, np.integer)) and not isinstance(value, (bool, np.bool_)):
            if 0 <= int(value) < len(col.levels):
                return int(value)
            raise InputError(f"code {value} out of range for column {col.name!r}{where}")
        try:
            return col.levels.index(str(value))
        except ValueError:
            raise InputError(
                f"value {value!r} is not a declared level of column {col.name!r}{where}"
            ) from None
    if col.kind == BOOLEAN:
        if isinstance(value, (bool, np.bool_)):
            return 1.0 if value else 0.0
        token = str(value)
        if token in _TRUE_TOKENS:
            return 1.0
        if token in _FALSE_TOKENS:
            return 0.0
        raise InputError(f"value {value!r} is not boolean for column {col.name!r}{where}")
    try:
        return float(value)  # numeric / ordinal
    except (TypeError, ValueError):
        raise InputError(
            f"value {value!r} is not numeric for column {col.name!r}{where}"
        ) from None


_coerce_value = coerce_value


def _parse_cell(col: Column, text: str, row_number: int) -> float | int:
    if text == "":
        raise ParseError(
            f"missing value in column {col.name!r} at row {row_number}",
            row=row_number,
            column=col.name,
        )
    if col.kind == CATEGORICAL:
        try:
            return col.levels.index(text)
        except ValueError:
            raise ParseError(
                f"value {text!r} in column {col.name!r} at row {row_number} "
                f"is not among declared levels {list(col.levels)}",
                row=row_number,
                column=col.name,
            ) from None
    if col.kind == BOOLEAN:
        if text in _TRUE_TOKENS:
            return 1.0
        if text in _FALSE_TOKENS:
            return 0.0
        raise ParseError(
            f"value {text!r} in column {col.name!r} at row {row_number} is not boolean",
            row=row_number,
            column=col.name,
        )
    try:
        value = float(text)
    except ValueError:
        raise ParseError(
            f"cannot parse {text!r} in column {col.name!r} at row {row_number}",
            row=row_number,
            column=col.name,
        ) from None
    if col.kind == ORDINAL and not float(value).is_integer():
        raise ParseError(
            f"ordinal column {col.name!r} expects integers, got {text!r} at row {row_number}",
            row=row_number,
            column=col.name,
        )
    return value


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    """Read an RFC-4180-style CSV (header required, UTF-8) against a schema.

    Row order is preserved. Missing or extra columns raise
    SchemaMismatchError; unparseable cells raise ParseError naming the
    offending 1-based data row.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        missing = [n for n in schema.names if n not in header]
        extra = [n for n in header if n not in schema.names]
        if missing or extra:
            raise SchemaMismatchError(
                f"{path}: header does not match schema "
                f"(missing={missing}, unexpected={extra})"
            )
        pos = {name: header.index(name) for name in schema.names}
        cols: dict[str, list] = {name: [] for name in schema.names}
        n_rows = 0
        for row_number, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: row {row_number} has {len(row)} fields, expected {len(header)}",
                    row=row_number,
                )
            for col in schema.columns:
                cols[col.name].append(_parse_cell(col, row[pos[col.name]], row_number))
            n_rows += 1
    if n_rows == 0:
        raise InputError(f"{path}: no data rows")
    return Dataset(schema, {name: np.asarray(vals) for name, vals in cols.items()})


def _format_cell(col: Column, value: float | int) -> str:
    if col.kind == CATEGORICAL:
        return col.levels[int(value)]
    if col.kind == BOOLEAN:
        return "TRUE" if value else "FALSE"
    if col.kind == ORDINAL or float(value).is_integer():
        return str(int(value))
    return repr(float(value))  # repr round-trips float64 exactly


def write_csv(data: Dataset, path: str | Path) -> None:
    """Write a Dataset so that reloading with the same schema is cell-identical."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.schema.names)
        columns = [data.column_values(n) for n in data.schema.names]
        specs = list(data.schema.columns)
        for i in range(data.n_rows):
            writer.writerow([_format_cell(c, col[i]) for c, col in zip(specs, columns)])


@dataclass(frozen=True)
class EncodedMatrix:
    """Dense design matrix with provenance back to the original columns."""

    values: np.ndarray
    column_names: tuple[str, ...]
    provenance: Mapping[str, tuple[int, ...]]
    mode: str

    def __post_init__(self):
        self.values.flags.writeable = False
        width = sum(len(v) for v in self.provenance.values())
        if width != self.values.shape[1] or len(self.column_names) != width:
            raise InputError("encoded width disagrees with provenance map")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


def _encoded_width(col: Column, mode: str) -> int:
    if col.kind != CATEGORICAL:
        return 1
    return len(col.levels) if mode == ONEHOT else len(col.levels) - 1


def encode_columns(data: Dataset, names: Sequence[str], mode: str = ONEHOT) -> EncodedMatrix:
    """Encode the named columns into a float64 design matrix.

    Categoricals expand to indicators (all levels for `onehot`, all but the
    first declared level for `drop_first`); everything else passes through
    as a single column.
    """
    if mode not in (ONEHOT, DROP_FIRST):
        raise InputError(f"unknown encoding mode {mode!r}")
    if not names:
        raise InputError("no columns selected for encoding")
    blocks: list[np.ndarray] = []
    out_names: list[str] = []
    provenance: dict[str, tuple[int, ...]] = {}
    offset = 0
    for name in names:
        col = data.schema.column(name)
        if col.kind == CATEGORICAL:
            codes = data.column_values(name)
            start = 0 if mode == ONEHOT else 1
            width = _encoded_width(col, mode)
            block = np.zeros((data.n_rows, width))
            for j, level_idx in enumerate(range(start, len(col.levels))):
                block[:, j] = codes == level_idx
            blocks.append(block)
            out_names.extend(f"{name}={col.levels[k]}" for k in range(start, len(col.levels)))
        else:
            blocks.append(data.column_values(name).reshape(-1, 1))
            out_names.append(name)
            width = 1
        provenance[name] = tuple(range(offset, offset + width))
        offset += width
    values = np.ascontiguousarray(np.hstack(blocks)) if blocks else np.zeros((data.n_rows, 0))
    return EncodedMatrix(values, tuple(out_names), provenance, mode)


def one_hot_encode(
    data: Dataset, roles: Iterable[ColumnRole], mode: str = ONEHOT
) -> EncodedMatrix:
    """Encode every column whose role is in `roles`, in schema order."""
    role_set = set(roles)
    names = [c.name for c in data.schema.columns if c.role in role_set]
    if not names:
        raise InputError(f"no columns with roles {sorted(r.value for r in role_set)}")
    return encode_columns(data, names, mode)


def encode_single(
    schema: Schema, values: Mapping[str, object], names: Sequence[str], mode: str
) -> np.ndarray:
    """Encode one row given as a column->value mapping; returns shape (1, p)."""
    cols = {}
    for name in names:
        col = schema.column(name)
        if name not in values:
            raise InputError(f"missing value for column {name!r}")
        cols[name] = np.asarray([_coerce_value(col, values[name])])
    # build a minimal one-row dataset restricted to the requested columns
    blocks = []
    for name in names:
        col = schema.column(name)
        if col.kind == CATEGORICAL:
            start = 0 if mode == ONEHOT else 1
            row = np.zeros(_encoded_width(col, mode))
            code = int(cols[name][0])
            if code >= start:
                row[code - start] = 1.0
            blocks.append(row)
        else:
            blocks.append(np.asarray([float(cols[name][0])]))
    return np.concatenate(blocks).reshape(1, -1)


@dataclass(frozen=True)
class FoldAssignment:
    """Balanced random partition of rows into k folds, reproducible from the seed."""

    k: int
    fold_of_row: np.ndarray

    def __post_init__(self):
        self.fold_of_row.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.fold_of_row.shape[0]

    def rows_in_fold(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == k)

    def rows_not_in_fold(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row != k)

    @classmethod
    def single_fold(cls, n: int) -> "FoldAssignment":
        """Degenerate K=1 assignment: valid only for diagnostics, never for training."""
        return cls(1, np.zeros(n, dtype=np.int32))


def assign_folds(n: int, k: int, seed: int) -> FoldAssignment:
    """Uniformly random balanced fold assignment; sizes differ by at most one."""
    if k < 2:
        raise InputError(f"fold count must be at least 2, got {k}")
    if k > n:
        raise InputError(f"fold count {k} exceeds row count {n}")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), n, k)))
    perm = rng.permutation(n)
    fold = np.empty(n, dtype=np.int32)
    fold[perm] = np.arange(n, dtype=np.int32) % k
    return FoldAssignment(k, fold)


def train_test_indices(
    n: int, n_train: int, shuffle: bool = False, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """First-n_train/rest split by default; optionally a seeded shuffle first."""
    if not 0 < n_train < n:
        raise InputError(f"n_train must be in (0, {n}), got {n_train}")
    order = np.arange(n)
    if shuffle:
        order = np.random.default_rng(seed).permutation(n)
    return order[:n_train], order[n_train:]


def infer_schema(
    path: str | Path,
    outcome: str,
    sensitive: Sequence[str],
    identifier: Sequence[str] = (),
) -> Schema:
    """Infer column kinds from a CSV: boolean, numeric (integers become ordinal),
    else categorical with the sorted observed levels. Roles come from the arguments.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        seen: dict[str, set[str]] = {name: set() for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                seen[name].add(cell)
    for required in (outcome, *sensitive, *identifier):
        if required not in header:
            raise SchemaMismatchError(f"{path}: column {required!r} not in header")

    def kind_of(values: set[str]) -> tuple[str, tuple[str, ...]]:
        nonempty = {v for v in values if v != ""}
        if nonempty and nonempty <= (_TRUE_TOKENS | _FALSE_TOKENS):
            return BOOLEAN, ()
        try:
            floats = [float(v) for v in nonempty]
        except ValueError:
            return CATEGORICAL, tuple(sorted(nonempty))
        if floats and all(f.is_integer() for f in floats):
            return ORDINAL, ()
        return NUMERIC, ()

    columns = []
    for name in header:
        kind, levels = kind_of(seen[name])
        if name == outcome:
            role = ColumnRole.OUTCOME
        elif name in sensitive:
            role = ColumnRole.SENSITIVE
        elif name in identifier:
            role = ColumnRole.IDENTIFIER
        else:
            role = ColumnRole.NON_SENSITIVE
        columns.append(Column(name, kind, role, levels))
    return Schema(tuple(columns))
