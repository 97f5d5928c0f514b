"""Hiring simulation with exact counterfactual regeneration.

Draws latent ability, demographics, and error terms, computes the dependent
variables (problem-solving assessment, grade average, performance rating)
through fixed structural equations, and can regenerate any record with
manipulated gender/race but identical latents. That regenerated copy is the
ground-truth counterfactual against which fairness is scored.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError
from .tabular import (
    CATEGORICAL,
    NUMERIC,
    ORDINAL,
    Column,
    ColumnRole,
    Dataset,
    Schema,
)

# one fixed stream id per column so adding draws never perturbs existing ones
_STREAMS = {"ability": 0, "age": 1, "gender": 2, "race": 3,
            "eps_assessment": 4, "eps_grade": 5, "eps_rating": 6}

DEFAULT_GENDER_PROBS = (("male", 0.7), ("female", 0.275), ("nonbinary", 0.025))
# Declared approximation of US shares; config values, not ground truth.
DEFAULT_RACE_PROBS = (
    ("white", 0.637), ("hispanic", 0.163), ("black", 0.122), ("asian", 0.047),
    ("biracial", 0.019), ("native", 0.007), ("other", 0.004), ("hawaiian", 0.001),
)


@dataclass(frozen=True)
class SimConfig:
    n: int
    seed: int = 0
    ability_mean: float = 88.0
    ability_sd: float = 4.0
    age_min: int = 18
    age_max: int = 25
    gender_probs: tuple[tuple[str, float], ...] = DEFAULT_GENDER_PROBS
    race_probs: tuple[tuple[str, float], ...] = DEFAULT_RACE_PROBS
    sd_assessment: float = 1.09
    sd_grade: float = 1.09
    sd_rating: float = 10.0
    # False: the rating is a sum of separately scaled terms (the default
    # reading). True: 3.1 multiplies the whole bracket, error included.
    rating_scale_all: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise InputError("n must be at least 1")
        if self.age_min > self.age_max:
            raise InputError("age_min must not exceed age_max")
        for label, probs in (("gender", self.gender_probs), ("race", self.race_probs)):
            values = [p for _, p in probs]
            if any(not 0.0 <= p <= 1.0 for p in values):
                raise InputError(f"{label} probabilities must lie in [0, 1]")
            if abs(sum(values) - 1.0) > 1e-9:
                raise InputError(f"{label} probabilities must sum to 1")
        for label, sd in (("ability", self.ability_sd), ("assessment", self.sd_assessment),
                          ("grade", self.sd_grade), ("rating", self.sd_rating)):
            if sd <= 0:
                raise InputError(f"{label} sd must be positive")

    @property
    def gender_levels(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.gender_probs)

    @property
    def race_levels(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.race_probs)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n, "seed": self.seed,
                "ability_mean": self.ability_mean, "ability_sd": self.ability_sd,
                "age_min": self.age_min, "age_max": self.age_max,
                "gender_probs": [list(x) for x in self.gender_probs],
                "race_probs": [list(x) for x in self.race_probs],
                "sd_assessment": self.sd_assessment, "sd_grade": self.sd_grade,
                "sd_rating": self.sd_rating, "rating_scale_all": self.rating_scale_all,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        raw = json.loads(text)
        raw["gender_probs"] = tuple((str(a), float(b)) for a, b in raw["gender_probs"])
        raw["race_probs"] = tuple((str(a), float(b)) for a, b in raw["race_probs"])
        return cls(**raw)


def sim_schema(config: SimConfig) -> Schema:
    """age, gender, race are sensitive; assessment and grade feed the model;
    rating is the outcome."""
    s = ColumnRole.SENSITIVE
    return Schema(
        (
            Column("age", ORDINAL, s),
            Column("gender", CATEGORICAL, s, levels=config.gender_levels),
            Column("race", CATEGORICAL, s, levels=config.race_levels),
            Column("assessment", NUMERIC, ColumnRole.NON_SENSITIVE),
            Column("grade", NUMERIC, ColumnRole.NON_SENSITIVE),
            Column("rating", NUMERIC, ColumnRole.OUTCOME),
        )
    )


@dataclass
class LatentTable:
    """Everything needed to regenerate records deterministically."""

    config: SimConfig
    ability: np.ndarray
    age: np.ndarray
    gender: np.ndarray  # codes into config.gender_levels
    race: np.ndarray  # codes into config.race_levels
    eps_assessment: np.ndarray
    eps_grade: np.ndarray
    eps_rating: np.ndarray

    @property
    def n(self) -> int:
        return self.ability.shape[0]

    def take(self, rows: np.ndarray | Sequence[int]) -> "LatentTable":
        rows = np.asarray(rows)
        return LatentTable(
            config=self.config,
            ability=self.ability[rows],
            age=self.age[rows],
            gender=self.gender[rows],
            race=self.race[rows],
            eps_assessment=self.eps_assessment[rows],
            eps_grade=self.eps_grade[rows],
            eps_rating=self.eps_rating[rows],
        )

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "ability", "age", "gender", "race",
                             "eps_assessment", "eps_grade", "eps_rating"])
            for i in range(self.n):
                writer.writerow([
                    i,
                    repr(float(self.ability[i])),
                    int(self.age[i]),
                    self.config.gender_levels[self.gender[i]],
                    self.config.race_levels[self.race[i]],
                    repr(float(self.eps_assessment[i])),
                    repr(float(self.eps_grade[i])),
                    repr(float(self.eps_rating[i])),
                ])

    @classmethod
    def from_csv(cls, path: str | Path, config: SimConfig) -> "LatentTable":
        rows = []
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                rows.append(row)
        if not rows:
            raise InputError(f"{path}: no latent rows")
        gender_index = {name: i for i, name in enumerate(config.gender_levels)}
        race_index = {name: i for i, name in enumerate(config.race_levels)}
        return cls(
            config=config,
            ability=np.array([float(r["ability"]) for r in rows]),
            age=np.array([int(r["age"]) for r in rows], dtype=np.int64),
            gender=np.array([gender_index[r["gender"]] for r in rows], dtype=np.int32),
            race=np.array([race_index[r["race"]] for r in rows], dtype=np.int32),
            eps_assessment=np.array([float(r["eps_assessment"]) for r in rows]),
            eps_grade=np.array([float(r["eps_grade"]) for r in rows]),
            eps_rating=np.array([float(r["eps_rating"]) for r in rows]),
        )


def _stream(config: SimConfig, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((config.seed, _STREAMS[name])))


def _dependent_variables(
    config: SimConfig,
    ability: np.ndarray,
    age: np.ndarray,
    gender_male: np.ndarray,
    race_white: np.ndarray,
    eps_assessment: np.ndarray,
    eps_grade: np.ndarray,
    eps_rating: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    assessment = 0.1 * ability * (gender_male + 1.07) * (race_white + 1.07) + eps_assessment
    grade = 0.1 * ability * (gender_male + 1.29) + eps_grade
    sin_age = np.sin(age.astype(np.float64))  # radians on the integer age
    terms = (
        3.7 * gender_male
        + 1.9 * race_white
        + 7.0 * gender_male * race_white
        + 0.7 * grade
        + 0.13 * assessment
    )
    if config.rating_scale_all:
        rating = 3.1 * (sin_age + terms + eps_rating)
    else:
        rating = 3.1 * sin_age + terms + eps_rating
    return assessment, grade, rating


def _records_from_latents(latents: LatentTable) -> Dataset:
    config = latents.config
    male = latents.config.gender_levels.index("male") if "male" in config.gender_levels else -1
    white = latents.config.race_levels.index("white") if "white" in config.race_levels else -1
    gender_male = (latents.gender == male).astype(np.float64)
    race_white = (latents.race == white).astype(np.float64)
    assessment, grade, rating = _dependent_variables(
        config, latents.ability, latents.age, gender_male, race_white,
        latents.eps_assessment, latents.eps_grade, latents.eps_rating,
    )
    return Dataset(
        sim_schema(config),
        {
            "age": latents.age.astype(np.float64),
            "gender": latents.gender,
            "race": latents.race,
            "assessment": assessment,
            "grade": grade,
            "rating": rating,
        },
    )


def generate(config: SimConfig) -> tuple[Dataset, LatentTable]:
    """Draw latents from per-column seeded streams and compute the dependent
    variables through the structural equations."""
    n = config.n
    ability = _stream(config, "ability").normal(config.ability_mean, config.ability_sd, n)
    age = _stream(config, "age").integers(config.age_min, config.age_max + 1, size=n)
    gender = _stream(config, "gender").choice(
        len(config.gender_levels), size=n, p=[p for _, p in config.gender_probs]
    ).astype(np.int32)
    race = _stream(config, "race").choice(
        len(config.race_levels), size=n, p=[p for _, p in config.race_probs]
    ).astype(np.int32)
    eps_a = _stream(config, "eps_assessment").normal(0.0, config.sd_assessment, n)
    eps_g = _stream(config, "eps_grade").normal(0.0, config.sd_grade, n)
    eps_r = _stream(config, "eps_rating").normal(0.0, config.sd_rating, n)
    latents = LatentTable(
        config=config, ability=ability, age=age.astype(np.int64),
        gender=gender, race=race,
        eps_assessment=eps_a, eps_grade=eps_g, eps_rating=eps_r,
    )
    return _records_from_latents(latents), latents


def counterfactual_copy(
    latents: LatentTable,
    target_gender: str | Sequence[str] | None,
    target_race: str | Sequence[str] | None,
) -> Dataset:
    """Regenerate records with gender/race overwritten and all latents kept.

    Targets may be a single level applied to every row, a per-row sequence of
    levels, or None to leave that column untouched.
    """
    config = latents.config

    def resolve(target, levels: tuple[str, ...], current: np.ndarray, label: str) -> np.ndarray:
        if target is None:
            return current.copy()
        if isinstance(target, str):
            if target not in levels:
                raise InputError(f"unknown {label} level {target!r}")
            return np.full(latents.n, levels.index(target), dtype=np.int32)
        codes = np.empty(latents.n, dtype=np.int32)
        seq = list(target)
        if len(seq) != latents.n:
            raise InputError(f"per-row {label} levels must have length {latents.n}")
        for i, value in enumerate(seq):
            if value not in levels:
                raise InputError(f"unknown {label} level {value!r}")
            codes[i] = levels.index(value)
        return codes

    manipulated = LatentTable(
        config=config,
        ability=latents.ability,
        age=latents.age,
        gender=resolve(target_gender, config.gender_levels, latents.gender, "gender"),
        race=resolve(target_race, config.race_levels, latents.race, "race"),
        eps_assessment=latents.eps_assessment,
        eps_grade=latents.eps_grade,
        eps_rating=latents.eps_rating,
    )
    return _records_from_latents(manipulated)


def regenerate(latents: LatentTable) -> Dataset:
    """Recompute the dataset from stored latents (bit-exact with generate)."""
    return _records_from_latents(latents)
