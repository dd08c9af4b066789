"""Policies queried by the simulator, and their JSON documents."""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any

import numpy as np

from errors import InvalidThresholdsError, PolicyMismatchError
from log_config import get_logger
from mdp import Action, Observation, PolicyTable, TabularMDP
from model_nonuniform import NonUniformMDP
from model_nonuniform import build_mdp as build_nonuniform
from model_uniform import UniformMDP
from model_uniform import build_mdp as build_uniform
from models.params import NonUniformParams, SizeDistribution, UniformParams
from models.results import PolicyDocument, PolicyEntry, PolicyKind, ThresholdSummary
from renewal_oracle import validate_taus

logger = get_logger(__name__)


class Policy(ABC):
    """Maps the observation at the start of a slot to an action."""

    kind: PolicyKind

    @abstractmethod
    def choose(self, obs: Observation) -> Action:
        """Action when an update has arrived."""

    def decide(self, obs: Observation) -> Action:
        if obs.arrival == 0:
            return Action.SKIP
        return self.choose(obs)

    def check_sizes(self, sizes: SizeDistribution) -> None:
        """Raise if the policy cannot interpret updates drawn from ``sizes``."""

    def params(self) -> dict[str, Any]:
        return {}

    def to_document(self) -> PolicyDocument:
        return PolicyDocument(kind=self.kind, params=self.params())

    @property
    def label(self) -> str:
        return self.kind.value


class AlwaysSkip(Policy):
    """Never preempt; an idle link still takes the new update."""

    kind = PolicyKind.ALWAYS_SKIP

    def choose(self, obs: Observation) -> Action:
        return Action.SKIP if obs.busy else Action.SWITCH


class AlwaysSwitch(Policy):
    kind = PolicyKind.ALWAYS_SWITCH

    def choose(self, obs: Observation) -> Action:
        return Action.SWITCH


class ThresholdPolicy(Policy):
    """Switch to an arrival in epoch slot ``j`` iff ``i <= K`` and ``j <= tau_i``.

    ``i`` is the epoch slot in which the update in service arrived.
    """

    kind = PolicyKind.THRESHOLD

    def __init__(self, thresholds: ThresholdSummary, d: int) -> None:
        validate_taus(thresholds.taus, d)
        self.thresholds = thresholds
        self.d = d

    def choose(self, obs: Observation) -> Action:
        if not obs.busy:
            return Action.SWITCH
        if obs.size != self.d or obs.arrival != self.d:
            raise PolicyMismatchError(
                f"threshold policy for d={self.d} got sizes {obs.size}/{obs.arrival}"
            )
        if self.thresholds.accepts(obs.service_slot, obs.epoch_slot):
            return Action.SWITCH
        return Action.SKIP

    def check_sizes(self, sizes: SizeDistribution) -> None:
        if sizes.support != (self.d,):
            raise PolicyMismatchError(
                f"threshold policy needs constant size {self.d}, got {sizes.describe()}"
            )

    def params(self) -> dict[str, Any]:
        return {"d": self.d, "taus": list(self.thresholds.taus)}


class TabularPolicy(Policy):
    """Looks the action up in a solved table; AoI above the cap uses the cap."""

    def __init__(self, table: PolicyTable) -> None:
        self.table = table
        if isinstance(table.mdp, UniformMDP):
            self.kind = PolicyKind.TABULAR_UNIFORM
        elif isinstance(table.mdp, NonUniformMDP):
            self.kind = PolicyKind.TABULAR_NONUNIFORM
        else:
            raise TypeError(f"unsupported model {type(table.mdp).__name__}")

    def choose(self, obs: Observation) -> Action:
        return Action(int(self.table.actions[self.table.mdp.locate(obs)]))

    def check_sizes(self, sizes: SizeDistribution) -> None:
        mdp = self.table.mdp
        if isinstance(mdp, UniformMDP):
            ok = sizes.support == (mdp.uniform.d,)
        else:
            assert isinstance(mdp, NonUniformMDP)
            ok = set(sizes.support) <= set(mdp.nonuniform.f_b.support)
        if not ok:
            raise PolicyMismatchError(
                f"{self.kind.value} policy cannot serve sizes {sizes.describe()}"
            )

    def params(self) -> dict[str, Any]:
        return self.table.mdp.params.model_dump(mode="json")

    def to_document(self) -> PolicyDocument:
        entries = [
            PolicyEntry(state=list(state), action=int(action))
            for state, action in self.table.items()
        ]
        return PolicyDocument(kind=self.kind, params=self.params(), entries=entries)


def decide(policy: Policy, obs: Observation) -> Action:
    return policy.decide(obs)


def from_document(doc: PolicyDocument) -> Policy:
    """Rebuild a policy from its JSON document.

    Tabular entries that are absent default to skip.
    """
    match doc.kind:
        case PolicyKind.ALWAYS_SKIP:
            return AlwaysSkip()
        case PolicyKind.ALWAYS_SWITCH:
            return AlwaysSwitch()
        case PolicyKind.THRESHOLD:
            try:
                d = int(doc.params["d"])
                taus = tuple(int(t) for t in doc.params.get("taus", []))
            except (KeyError, TypeError, ValueError) as e:
                raise InvalidThresholdsError(f"bad threshold parameters: {e}") from e
            return ThresholdPolicy(ThresholdSummary(taus=taus), d)
        case PolicyKind.TABULAR_UNIFORM:
            uniform = build_uniform(UniformParams.model_validate(doc.params))
            return TabularPolicy(_table_from_entries(uniform, doc.entries))
        case PolicyKind.TABULAR_NONUNIFORM:
            nonuniform = build_nonuniform(NonUniformParams.model_validate(doc.params))
            return TabularPolicy(_table_from_entries(nonuniform, doc.entries))
    raise PolicyMismatchError(f"unknown policy kind {doc.kind!r}")


def _table_from_entries(mdp: TabularMDP, entries: list[PolicyEntry]) -> PolicyTable:
    actions = np.zeros(mdp.n_states, dtype=np.int8)
    for entry in entries:
        state = mdp.make_state(entry.state[0], tuple(entry.state[1:]))
        actions[mdp.index(state)] = entry.action
    return PolicyTable(mdp, actions)


def save_policy(policy: Policy, path: Path) -> None:
    path.write_text(policy.to_document().model_dump_json(indent=1), encoding="utf-8")
    logger.info("policy_saved", kind=policy.kind.value, path=str(path))


def load_policy(path: Path) -> Policy:
    doc = PolicyDocument.model_validate_json(path.read_text(encoding="utf-8"))
    return from_document(doc)
