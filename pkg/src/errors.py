"""Exceptions raised by the models, policies and solvers."""


class AoIError(Exception):
    """Base class for all toolkit errors."""


class InvalidStateError(AoIError, ValueError):
    """A state lies outside the model's state space."""


class InfeasibleActionError(AoIError, ValueError):
    """A switch was requested in a slot without a new arrival."""


class PolicyMismatchError(AoIError, TypeError):
    """A policy was queried with an observation it cannot interpret."""


class InvalidThresholdsError(AoIError, ValueError):
    """A threshold vector is not non-increasing or has tau_i < i."""


class ThresholdStructureError(AoIError):
    """A tabular policy is not of threshold form in the arrival slot."""

    def __init__(self, service_slot: int, switch_slot: int, skip_slot: int) -> None:
        self.service_slot = service_slot
        self.switch_slot = switch_slot
        self.skip_slot = skip_slot
        super().__init__(
            f"update started at epoch slot {service_slot} switches at slot "
            f"{switch_slot} but skips at earlier slot {skip_slot}"
        )
