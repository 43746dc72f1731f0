"""Versioned JSON configuration for grid-robustness experiments.

Unknown keys are rejected so that a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from anneal_lab.harness import DEFAULT_MANTISSAS, DEFAULT_SEEDS, GridSpec
from anneal_lab.problems import AbsProblem, make_logreg
from anneal_lab.schedules import parse_schedule

CONFIG_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LogRegConfig(_Strict):
    kind: Literal["logreg"] = "logreg"
    n: int = Field(10_000, ge=1)
    dim: int = Field(20, ge=1)
    flip: float = Field(0.1, ge=0.0, le=1.0)
    seed: int = 0
    batch_size: int = Field(1000, ge=1)
    epochs: int = Field(1, ge=1)

    def build(self):
        problem = make_logreg(self.n, self.dim, self.flip, self.seed, self.batch_size)
        return problem, problem.steps_per_epoch * self.epochs, None


class AbsConfig(_Strict):
    kind: Literal["abs"]
    G: float = Field(1.0, gt=0)
    D: float = Field(1.0, gt=0)
    noise: Literal["rademacher", "signflip"] | None = None
    flip_prob: float = Field(0.0, ge=0.0, lt=0.5)
    T: int = Field(1000, ge=1)
    x1: float = 0.5

    def build(self):
        problem = AbsProblem(self.G, self.D, self.noise, self.flip_prob)
        return problem, self.T, [self.x1]


class GridConfig(_Strict):
    mantissas: tuple[float, ...] = DEFAULT_MANTISSAS
    decade_lo: int = -3
    decade_hi: int = 0

    def spec(self) -> GridSpec:
        return GridSpec(self.decade_lo, self.decade_hi, self.mantissas)


class ExperimentConfig(_Strict):
    version: Literal[1]
    problem: Annotated[Union[LogRegConfig, AbsConfig], Field(discriminator="kind")] = LogRegConfig()
    schedules: tuple[str, ...] = ("constant", "cosine", "poly:1")
    grid: GridConfig = GridConfig()
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    levels: tuple[int, ...] = (1, 2, 3, 4)
    gamma: float = Field(8.0, ge=0.0)

    @field_validator("schedules")
    @classmethod
    def _schedules_parse(cls, v):
        if not v:
            raise ValueError("at least one schedule is required")
        for name in v:
            parse_schedule(name)
        return v

    @field_validator("seeds", "levels")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("must be non-empty")
        return v

    @field_validator("levels")
    @classmethod
    def _positive_levels(cls, v):
        if any(k < 1 for k in v):
            raise ValueError("levels must be >= 1")
        return v


class ConfigError(ValueError):
    pass


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        where = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{where}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(f"invalid config: {_format(err)}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON ({err})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(data)


def desk_config() -> ExperimentConfig:
    return ExperimentConfig(version=CONFIG_VERSION)
