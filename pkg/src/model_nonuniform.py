"""Skip/switch MDP for updates whose sizes are drawn from a bounded PMF.

State ``(delta, l, c, b)``: AoI, remaining transmission time and total size of
the update in service (``l = c = 0`` when idle) and the size of the update that
arrived in this slot (0 if none). Sizes are revealed on arrival.
"""

from functools import lru_cache
from typing import NamedTuple

from errors import InfeasibleActionError, InvalidStateError, PolicyMismatchError
from mdp import Action, Observation, TabularMDP
from models.params import NonUniformParams


class NonUniformState(NamedTuple):
    delta: int
    l: int  # noqa: E741
    c: int
    b: int


def service_configs(params: NonUniformParams) -> list[tuple[int, int]]:
    """``(l, c)`` pairs: idle plus every mid-service position, ascending."""
    busy = [
        (l, c) for c in params.f_b.support for l in range(1, c)  # noqa: E741
    ]
    return [(0, 0), *sorted(busy)]


def arrival_values(params: NonUniformParams) -> list[int]:
    return [0, *sorted(params.f_b.support)]


def reference_state(params: NonUniformParams) -> NonUniformState:
    return NonUniformState(params.f_b.b_min, 0, 0, 0)


def validate_state(s: NonUniformState, params: NonUniformParams) -> None:
    support = params.f_b.support
    if not params.f_b.b_min <= s.delta <= params.delta_max:
        raise InvalidStateError(f"delta={s.delta} outside [b_min, delta_max]")
    idle = s.l == 0 and s.c == 0
    if not idle and not (s.c in support and 1 <= s.l <= s.c - 1):
        raise InvalidStateError(f"service position l={s.l}, c={s.c} is invalid")
    if s.b != 0 and s.b not in support:
        raise InvalidStateError(f"arrival size b={s.b} is not in the support")


def allowed_actions(s: NonUniformState) -> frozenset[Action]:
    if s.b > 0:
        return frozenset({Action.SKIP, Action.SWITCH})
    return frozenset({Action.SKIP})


def cost_nonuniform(s: NonUniformState) -> float:
    return float(s.delta)


def next_core(
    s: NonUniformState, w: Action, params: NonUniformParams
) -> tuple[int, int, int]:
    """Deterministic ``(delta', l', c')`` part of a transition."""
    cap = params.delta_max
    if w is Action.SWITCH:
        return min(s.delta + 1, cap), s.b - 1, s.b
    if s.l == 1:
        return s.c, 0, 0  # delivery
    if s.l > 1:
        return min(s.delta + 1, cap), s.l - 1, s.c
    return min(s.delta + 1, cap), 0, 0


def transition_nonuniform(
    s: NonUniformState, w: Action, params: NonUniformParams
) -> list[tuple[NonUniformState, float]]:
    validate_state(s, params)
    if w not in allowed_actions(s):
        raise InfeasibleActionError(f"cannot switch in {s} without an arrival")
    delta, l, c = next_core(s, w, params)  # noqa: E741
    p = params.p
    out = [(NonUniformState(delta, l, c, 0), 1.0 - p)]
    out.extend(
        (NonUniformState(delta, l, c, k), p * q)
        for k, q in sorted(zip(params.f_b.support, params.f_b.probs, strict=True))
    )
    return out


def enumerate_states_nonuniform(params: NonUniformParams) -> list[NonUniformState]:
    """All states, ordered by ``delta`` and then ``(l, c, b)`` ascending."""
    configs = service_configs(params)
    arrivals = arrival_values(params)
    return [
        NonUniformState(delta, l, c, b)
        for delta in range(params.f_b.b_min, params.delta_max + 1)
        for l, c in configs  # noqa: E741
        for b in arrivals
    ]


class NonUniformMDP(TabularMDP):
    """Truncated non-uniform-size MDP; columns are ``(l, c, b)`` ascending."""

    name = "nonuniform"

    def __init__(self, params: NonUniformParams) -> None:
        self.nonuniform = params
        super().__init__(
            params,
            range(params.f_b.b_min, params.delta_max + 1),
            [
                (l, c, b)
                for l, c in service_configs(params)  # noqa: E741
                for b in arrival_values(params)
            ],
        )

    def make_state(self, delta: int, col: tuple[int, ...]) -> NonUniformState:
        return NonUniformState(delta, *col)

    def split_state(self, state: NonUniformState) -> tuple[int, tuple[int, ...]]:
        return state.delta, (state.l, state.c, state.b)

    def successors(
        self, state: NonUniformState, action: Action
    ) -> list[tuple[NonUniformState, float]]:
        return transition_nonuniform(state, action, self.nonuniform)

    def stage_cost(self, state: NonUniformState) -> float:
        return cost_nonuniform(state)

    def switch_allowed(self, state: NonUniformState) -> bool:
        return state.b > 0

    def observe(self, state: NonUniformState) -> Observation:
        # The epoch position is not part of this state.
        return Observation(
            delta=state.delta,
            remaining=state.l,
            size=state.c,
            arrival=state.b,
            epoch_slot=0,
            service_slot=0,
        )

    def locate(self, obs: Observation) -> int:
        delta = min(max(obs.delta, self.delta_min), self.nonuniform.delta_max)
        try:
            return self.index(
                NonUniformState(delta, obs.remaining, obs.size, obs.arrival)
            )
        except InvalidStateError as e:
            raise PolicyMismatchError(
                f"observation {obs} does not fit sizes {self.nonuniform.f_b.describe()}"
            ) from e

    @property
    def reference(self) -> int:
        return self.index(reference_state(self.nonuniform))


@lru_cache(maxsize=8)
def build_mdp(params: NonUniformParams) -> NonUniformMDP:
    return NonUniformMDP(params)
