"""Result models produced by the solvers, the oracle and the simulator."""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Self

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

IntArray = npt.NDArray[np.int64]


class ThresholdSummary(BaseModel):
    """Per-slot switching thresholds of a sequential-switching policy.

    ``taus[i - 1]`` is the latest epoch slot at which a new arrival is still
    accepted while the update that started in epoch slot ``i`` is in service.
    Slots beyond ``k`` never accept a preemption.
    """

    model_config = ConfigDict(frozen=True)

    taus: tuple[int, ...] = ()
    order_violations: tuple[int, ...] = ()

    @computed_field  # type: ignore[prop-decorator]
    @property
    def k(self) -> int:
        return len(self.taus)

    def accepts(self, i: int, j: int) -> bool:
        return 1 <= i <= self.k and j <= self.taus[i - 1]


class RenewalMoments(BaseModel):
    """First two moments of the epoch length and the resulting average AoI."""

    model_config = ConfigDict(frozen=True)

    mean_x: float
    mean_x2: float
    avg_aoi: float  # per-slot sum convention
    avg_aoi_continuous: float  # (2d + X)X/2 per epoch, half a slot higher

    @model_validator(mode="after")
    def _check_moments(self) -> Self:
        if self.mean_x2 < self.mean_x**2 * (1.0 - 1e-12):
            raise ValueError("E[X^2] must be at least E[X]^2")
        return self


class Epoch(BaseModel):
    """One inter-delivery interval of a simulated trajectory."""

    model_config = ConfigDict(frozen=True)

    length: int = Field(ge=1)
    reset: int = Field(ge=1)  # service time of the update that closed the epoch
    start_aoi: int
    aoi_sum: int


@dataclass
class Trace:
    """Column-oriented per-slot trace; row ``t - 1`` describes slot ``t``."""

    delta: IntArray
    u_or_l: IntArray
    c: IntArray
    b: IntArray
    action: IntArray
    delivered: IntArray
    uniform: bool = True

    def __len__(self) -> int:
        return len(self.delta)

    @classmethod
    def empty(cls, uniform: bool = True) -> "Trace":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, z, z, uniform=uniform)


class SimStats(BaseModel):
    """Outcome of one simulation run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    horizon: int
    seed: int
    time_avg_aoi: float
    cumulative_aoi: float
    continuous_aoi: float  # cumulative_aoi + horizon / 2
    standard_error: float
    delivered: int
    switches: int  # preemptions of an update in service
    starts: int  # transmissions started on an idle link
    skips: int  # arrivals dropped
    epochs: list[Epoch] = Field(default_factory=list)
    trace: Trace | None = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def _check_epochs(self) -> Self:
        if sum(e.length for e in self.epochs) > self.horizon:
            raise ValueError("epochs cover more slots than the horizon")
        return self


class PolicyKind(str, Enum):
    TABULAR_UNIFORM = "tabular-uniform"
    TABULAR_NONUNIFORM = "tabular-nonuniform"
    THRESHOLD = "threshold"
    ALWAYS_SKIP = "always-skip"
    ALWAYS_SWITCH = "always-switch"


class PolicyEntry(BaseModel):
    state: list[int]
    action: int = Field(ge=0, le=1)


class PolicyDocument(BaseModel):
    """JSON form of any policy kind."""

    kind: PolicyKind
    params: dict[str, Any] = Field(default_factory=dict)
    entries: list[PolicyEntry] = Field(default_factory=list)


class SolveSummary(BaseModel):
    """Value-function summary written next to a solved policy."""

    model: str
    params: dict[str, Any]
    structured: bool
    gain: float
    iterations_run: int
    span: float
    converged: bool
    n_states: int
    value_min: float
    value_max: float
    switch_states: int
    elapsed_s: float


class StructureReport(BaseModel):
    """Violation counts of the structural properties of a non-uniform policy.

    Each field counts states at which the named implication fails.
    """

    switch_implies_smaller_arrival: int = 0
    small_arrival_switches: int = 0
    switch_implies_larger_service: int = 0
    idle_arrival_switches: int = 0
    skip_persists_in_delta: int = 0
    min_service_max_arrival_switches: int = 0
    states_checked: int = 0

    @property
    def ok(self) -> bool:
        return (
            self.switch_implies_smaller_arrival
            + self.small_arrival_switches
            + self.switch_implies_larger_service
            + self.idle_arrival_switches
            + self.skip_persists_in_delta
            == 0
        )


class TrajectoryReport(BaseModel):
    """Epoch-level check of the sequential-switching and idle-start laws."""

    epochs_checked: int = 0
    ss_violations: int = 0
    idle_violations: int = 0
    first_violation_slot: int | None = None

    @property
    def ok(self) -> bool:
        return self.ss_violations == 0 and self.idle_violations == 0


class SweepRow(BaseModel):
    """One grid point of an AoI-versus-p sweep."""

    model_config = ConfigDict(populate_by_name=True)

    p: float
    j_opt: float = Field(serialization_alias="J_opt")
    sim_opt: float
    sim_skip: float
    sim_switch: float
    gap_skip_minus_opt: float
    se_opt: float
    se_skip: float
    se_switch: float
