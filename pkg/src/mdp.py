"""Shared vocabulary for the truncated skip/switch MDPs.

Both update-size models lay their states out on a grid: one row per AoI
value (ascending) and a fixed, model-specific ordering of the remaining
coordinates inside a row. The flat state index is ``row * n_cols + col``,
so value vectors can be viewed as ``(n_rows, n_cols)`` arrays whenever a
sweep needs to walk along the AoI axis.
"""

from abc import ABC, abstractmethod
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import Any

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp
from pydantic import BaseModel

from errors import InvalidStateError

FloatArray = npt.NDArray[np.float64]
ActionArray = npt.NDArray[np.int8]


class Action(IntEnum):
    """Transmission decision taken at the start of a slot."""

    SKIP = 0  # drop the new arrival; continue (or stay idle)
    SWITCH = 1  # drop the in-service update (if any) and send the new arrival


@dataclass(frozen=True, slots=True)
class Observation:
    """What a policy sees at the start of a slot.

    ``remaining``/``size`` are 0 when the link is idle, ``arrival`` is the size
    of the new update (0 if nothing arrived). ``epoch_slot`` counts slots since
    the last delivery (1-based) and ``service_slot`` is the epoch slot in which
    the in-service update arrived (0 when idle).
    """

    delta: int
    remaining: int
    size: int
    arrival: int
    epoch_slot: int
    service_slot: int

    @property
    def busy(self) -> bool:
        return self.size > 0

    @property
    def age_in_service(self) -> int:
        """Age of the update being sent (slots already spent on it)."""
        return self.size - self.remaining if self.busy else 0


class TabularMDP(ABC):
    """A finite, AoI-truncated skip/switch MDP with its transition matrices."""

    name: str = ""

    def __init__(
        self,
        params: BaseModel,
        delta_values: Sequence[int],
        columns: Sequence[tuple[int, ...]],
    ) -> None:
        self.params = params
        self.delta_values = np.asarray(delta_values, dtype=np.int64)
        self.delta_min = int(self.delta_values[0])
        self.columns = list(columns)
        self.col_index = {col: k for k, col in enumerate(self.columns)}
        self.n_rows = len(self.delta_values)
        self.n_cols = len(self.columns)

    # Model-specific pieces

    @abstractmethod
    def make_state(self, delta: int, col: tuple[int, ...]) -> Any:
        """Build the state tuple for AoI ``delta`` and in-row coordinates."""

    @abstractmethod
    def split_state(self, state: Any) -> tuple[int, tuple[int, ...]]:
        """Inverse of :meth:`make_state`."""

    @abstractmethod
    def successors(self, state: Any, action: Action) -> list[tuple[Any, float]]:
        """Transition distribution of ``state`` under ``action``."""

    @abstractmethod
    def stage_cost(self, state: Any) -> float:
        """Per-slot cost of ``state``."""

    @abstractmethod
    def switch_allowed(self, state: Any) -> bool:
        """Whether SWITCH is an admissible action in ``state``."""

    @abstractmethod
    def observe(self, state: Any) -> Observation:
        """Observation a policy would see in ``state``."""

    @abstractmethod
    def locate(self, obs: Observation) -> int:
        """Index of the state matching ``obs`` (AoI clamped to the cap)."""

    @property
    @abstractmethod
    def reference(self) -> int:
        """Index of the reference state used for relative values."""

    # Shared machinery

    @property
    def n_states(self) -> int:
        return self.n_rows * self.n_cols

    @cached_property
    def states(self) -> list[Any]:
        return [
            self.make_state(int(delta), col)
            for delta in self.delta_values
            for col in self.columns
        ]

    def index(self, state: Any) -> int:
        delta, col = self.split_state(state)
        row = delta - self.delta_min
        k = self.col_index.get(col)
        if k is None or not 0 <= row < self.n_rows:
            raise InvalidStateError(f"{state!r} is not in the {self.name} state space")
        return row * self.n_cols + k

    @cached_property
    def cost(self) -> FloatArray:
        return np.array([self.stage_cost(s) for s in self.states], dtype=np.float64)

    @cached_property
    def can_switch(self) -> npt.NDArray[np.bool_]:
        return np.array([self.switch_allowed(s) for s in self.states], dtype=bool)

    @cached_property
    def p_skip(self) -> sp.csr_matrix:
        return self._transition_matrix(Action.SKIP)

    @cached_property
    def p_switch(self) -> sp.csr_matrix:
        """Switch transitions; rows of states without an arrival are empty."""
        return self._transition_matrix(Action.SWITCH)

    def _transition_matrix(self, action: Action) -> sp.csr_matrix:
        rows: list[int] = []
        cols: list[int] = []
        probs: list[float] = []
        for i, state in enumerate(self.states):
            if action is Action.SWITCH and not self.switch_allowed(state):
                continue
            for nxt, prob in self.successors(state, action):
                rows.append(i)
                cols.append(self.index(nxt))
                probs.append(prob)
        return sp.csr_matrix(
            (probs, (rows, cols)), shape=(self.n_states, self.n_states)
        )

    def policy_matrix(self, actions: ActionArray) -> sp.csr_matrix:
        """Transition matrix of the chain induced by a deterministic policy."""
        switch = actions.astype(np.float64)
        return sp.csr_matrix(
            sp.diags(1.0 - switch) @ self.p_skip + sp.diags(switch) @ self.p_switch
        )

    def grid(self, values: npt.NDArray[Any]) -> npt.NDArray[Any]:
        """View a per-state vector as ``(n_rows, n_cols)``."""
        return values.reshape(self.n_rows, self.n_cols)


@dataclass(eq=False)
class ValueFunction:
    """Relative (or discounted) values over an MDP's states."""

    mdp: TabularMDP
    values: FloatArray
    gain: float
    iterations_run: int
    span: float
    converged: bool

    def __getitem__(self, state: Any) -> float:
        return float(self.values[self.mdp.index(state)])


@dataclass
class PolicyTable:
    """Deterministic stationary policy over every state of an MDP."""

    mdp: TabularMDP
    actions: ActionArray

    def __post_init__(self) -> None:
        if self.actions.shape != (self.mdp.n_states,):
            raise ValueError("policy table must cover every state")
        if np.any((self.actions == Action.SWITCH) & ~self.mdp.can_switch):
            raise ValueError("policy switches in a state without an arrival")

    def __getitem__(self, state: Any) -> Action:
        return Action(int(self.actions[self.mdp.index(state)]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PolicyTable):
            return NotImplemented
        return self.mdp.n_states == other.mdp.n_states and bool(
            np.array_equal(self.actions, other.actions)
        )

    def items(self) -> Iterable[tuple[Any, Action]]:
        for state, action in zip(self.mdp.states, self.actions, strict=True):
            yield state, Action(int(action))

    @classmethod
    def from_rule(
        cls, mdp: TabularMDP, rule: Callable[[Observation], Action]
    ) -> "PolicyTable":
        """Tabulate an observation-based rule; no-arrival states are forced to skip."""
        actions = np.zeros(mdp.n_states, dtype=np.int8)
        for i, state in enumerate(mdp.states):
            if mdp.switch_allowed(state):
                actions[i] = rule(mdp.observe(state))
        return cls(mdp, actions)
