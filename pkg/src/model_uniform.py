"""Skip/switch MDP for updates of uniform size ``d``.

State ``(delta, u, a)``: AoI at the start of the slot, age of the update in
service (0 when idle) and whether a new update arrived in this slot.
"""

from functools import lru_cache
from typing import NamedTuple

from errors import InfeasibleActionError, InvalidStateError, PolicyMismatchError
from mdp import Action, Observation, TabularMDP
from models.params import UniformParams


class UniformState(NamedTuple):
    delta: int
    u: int
    a: int


def reference_state(params: UniformParams) -> UniformState:
    """The just-delivered, idle, no-arrival state ``(d, 0, 0)``."""
    return UniformState(params.d, 0, 0)


def validate_state(s: UniformState, params: UniformParams) -> None:
    if not params.d <= s.delta <= params.delta_max:
        raise InvalidStateError(f"delta={s.delta} outside [d, delta_max]")
    if not 0 <= s.u <= params.d - 1:
        raise InvalidStateError(f"u={s.u} outside [0, d-1]")
    if s.a not in (0, 1):
        raise InvalidStateError(f"a={s.a} must be 0 or 1")


def allowed_actions(s: UniformState) -> frozenset[Action]:
    if s.a == 1:
        return frozenset({Action.SKIP, Action.SWITCH})
    return frozenset({Action.SKIP})


def cost(s: UniformState) -> float:
    return float(s.delta)


def next_core(s: UniformState, w: Action, params: UniformParams) -> tuple[int, int]:
    """Deterministic ``(delta', u')`` part of a transition."""
    d = params.d
    if w is Action.SWITCH:
        return min(s.delta + 1, params.delta_max), 1
    if s.u == d - 1:
        return d, 0  # delivery
    return min(s.delta + 1, params.delta_max), s.u + 1 if s.u > 0 else 0


def transition_uniform(
    s: UniformState, w: Action, params: UniformParams
) -> list[tuple[UniformState, float]]:
    """Successor distribution; the arrival flag of the next slot is Bernoulli(p)."""
    validate_state(s, params)
    if w not in allowed_actions(s):
        raise InfeasibleActionError(f"cannot switch in {s} without an arrival")
    delta, u = next_core(s, w, params)
    return [
        (UniformState(delta, u, 1), params.p),
        (UniformState(delta, u, 0), 1.0 - params.p),
    ]


def enumerate_states(params: UniformParams) -> list[UniformState]:
    """All states in lexicographic ``(delta, u, a)`` order."""
    return [
        UniformState(delta, u, a)
        for delta in range(params.d, params.delta_max + 1)
        for u in range(params.d)
        for a in (0, 1)
    ]


def observe(s: UniformState, params: UniformParams) -> Observation:
    d = params.d
    epoch_slot = s.delta - d + 1
    return Observation(
        delta=s.delta,
        remaining=d - s.u if s.u > 0 else 0,
        size=d if s.u > 0 else 0,
        arrival=d if s.a else 0,
        epoch_slot=epoch_slot,
        service_slot=epoch_slot - s.u if s.u > 0 else 0,
    )


class UniformMDP(TabularMDP):
    """Truncated uniform-size MDP; columns are ``(u, a)`` in lexicographic order."""

    name = "uniform"

    def __init__(self, params: UniformParams) -> None:
        self.uniform = params
        super().__init__(
            params,
            range(params.d, params.delta_max + 1),
            [(u, a) for u in range(params.d) for a in (0, 1)],
        )

    def make_state(self, delta: int, col: tuple[int, ...]) -> UniformState:
        return UniformState(delta, *col)

    def split_state(self, state: UniformState) -> tuple[int, tuple[int, ...]]:
        return state.delta, (state.u, state.a)

    def successors(
        self, state: UniformState, action: Action
    ) -> list[tuple[UniformState, float]]:
        return transition_uniform(state, action, self.uniform)

    def stage_cost(self, state: UniformState) -> float:
        return cost(state)

    def switch_allowed(self, state: UniformState) -> bool:
        return state.a == 1

    def observe(self, state: UniformState) -> Observation:
        return observe(state, self.uniform)

    def locate(self, obs: Observation) -> int:
        d = self.uniform.d
        if obs.size not in (0, d) or obs.arrival not in (0, d):
            raise PolicyMismatchError(
                f"observation {obs} does not fit uniform size d={d}"
            )
        delta = min(obs.delta, self.uniform.delta_max)
        return self.index(
            UniformState(delta, obs.age_in_service, 1 if obs.arrival else 0)
        )

    @property
    def reference(self) -> int:
        return self.index(reference_state(self.uniform))


@lru_cache(maxsize=8)
def build_mdp(params: UniformParams) -> UniformMDP:
    return UniformMDP(params)
