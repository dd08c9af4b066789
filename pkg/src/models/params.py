"""Validated model, simulation and experiment parameters."""

import math
from enum import Enum
from pathlib import Path
from typing import Self

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_DELTA_MAX = 1000
DEFAULT_ITERS = 10_000
DEFAULT_TOL = 1e-8
DEFAULT_HORIZON = 10_000


class UniformParams(BaseModel):
    """Every update takes exactly ``d`` slots to transmit."""

    model_config = ConfigDict(frozen=True)

    d: int = Field(ge=2)
    p: float = Field(gt=0.0, lt=1.0)
    delta_max: int = DEFAULT_DELTA_MAX

    @model_validator(mode="after")
    def _check_cap(self) -> Self:
        if self.delta_max < 2 * self.d:
            raise ValueError(f"delta_max must be at least 2d = {2 * self.d}")
        return self


class SizeDistribution(BaseModel):
    """PMF of update transmission times over a bounded support."""

    model_config = ConfigDict(frozen=True)

    support: tuple[int, ...]
    probs: tuple[float, ...]

    @model_validator(mode="after")
    def _check_pmf(self) -> Self:
        if not self.support:
            raise ValueError("support must not be empty")
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs must have the same length")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support values must be distinct")
        if any(b < 2 for b in self.support):
            raise ValueError("every update needs at least two slots")
        if any(q <= 0.0 for q in self.probs):
            raise ValueError("probabilities must be positive")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        return self

    @classmethod
    def constant(cls, size: int) -> "SizeDistribution":
        return cls(support=(size,), probs=(1.0,))

    @classmethod
    def parse(cls, text: str) -> "SizeDistribution":
        """Parse the ``"5:0.5,8:0.5"`` flag syntax."""
        pairs = [item.split(":") for item in text.split(",") if item.strip()]
        try:
            ordered = sorted((int(b), float(q)) for b, q in pairs)
        except ValueError as e:
            raise ValueError(f"malformed size distribution {text!r}") from e
        return cls(
            support=tuple(b for b, _ in ordered), probs=tuple(q for _, q in ordered)
        )

    @property
    def is_constant(self) -> bool:
        return len(self.support) == 1

    @property
    def b_min(self) -> int:
        return min(self.support)

    @property
    def b_max(self) -> int:
        return max(self.support)

    def describe(self) -> str:
        return ",".join(
            f"{b}:{q:g}"
            for b, q in sorted(zip(self.support, self.probs, strict=True))
        )


class NonUniformParams(BaseModel):
    """Update sizes drawn i.i.d. from ``f_b`` and revealed on arrival."""

    model_config = ConfigDict(frozen=True)

    p: float = Field(gt=0.0, lt=1.0)
    f_b: SizeDistribution
    delta_max: int = DEFAULT_DELTA_MAX

    @model_validator(mode="after")
    def _check_cap(self) -> Self:
        if self.delta_max < 2 * self.f_b.b_max:
            raise ValueError(
                f"delta_max must be at least 2*b_max = {2 * self.f_b.b_max}"
            )
        return self


class SimConfig(BaseModel):
    """One slot-level simulation run."""

    model_config = ConfigDict(frozen=True)

    horizon: int = Field(default=DEFAULT_HORIZON, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    p: float = Field(gt=0.0, lt=1.0)
    sizes: SizeDistribution
    record_trace: bool = False
    batches: int = Field(default=20, ge=2)

    @field_validator("sizes", mode="before")
    @classmethod
    def _constant_size(cls, value: object) -> object:
        if isinstance(value, int):
            return SizeDistribution.constant(value)
        return value


class Mode(str, Enum):
    """Experiment driver modes."""

    SOLVE_UNIFORM = "solve-uniform"
    SOLVE_NONUNIFORM = "solve-nonuniform"
    SIMULATE = "simulate"
    SWEEP = "sweep"
    FIGURE = "figure"


class ModelKind(str, Enum):
    UNIFORM = "uniform"
    NONUNIFORM = "nonuniform"


class ExperimentConfig(BaseModel):
    """Declarative experiment description; CLI flags override file values."""

    model_config = ConfigDict(extra="forbid")

    mode: Mode
    model: ModelKind = ModelKind.UNIFORM

    # Model
    p: float | None = Field(default=None, gt=0.0, lt=1.0)
    d: int | None = Field(default=None, ge=2)
    sizes: SizeDistribution | None = None
    delta_max: int = Field(default=DEFAULT_DELTA_MAX, ge=4)
    iters: int = Field(default=DEFAULT_ITERS, ge=1)
    tol: float = Field(default=DEFAULT_TOL, gt=0.0)
    structured: bool = True

    # Simulation
    horizon: int = Field(default=DEFAULT_HORIZON, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    policy: Path | None = None
    trace: Path | None = None

    # Sweep / figure
    p_grid: list[float] = Field(default_factory=list)
    which: str | None = None

    # Output
    out: Path | None = None

    @field_validator("sizes", mode="before")
    @classmethod
    def _parse_sizes(cls, value: object) -> object:
        if isinstance(value, str):
            return SizeDistribution.parse(value)
        return value

    @field_validator("p_grid")
    @classmethod
    def _check_grid(cls, value: list[float]) -> list[float]:
        if any(not 0.0 < p < 1.0 for p in value):
            raise ValueError("every p in the grid must lie in (0, 1)")
        return sorted(value)

    def uniform_params(self) -> UniformParams:
        if self.p is None or self.d is None:
            raise ValueError("uniform model needs both p and d")
        return UniformParams(d=self.d, p=self.p, delta_max=self.delta_max)

    def nonuniform_params(self) -> NonUniformParams:
        if self.p is None or self.sizes is None:
            raise ValueError("non-uniform model needs both p and sizes")
        return NonUniformParams(p=self.p, f_b=self.sizes, delta_max=self.delta_max)
