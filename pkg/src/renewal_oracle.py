"""Exact average AoI of sequential-switching threshold policies (uniform size).

Every delivery starts a new epoch with AoI ``d``. An epoch of ``X`` slots adds
``X*d + X*(X - 1)/2`` to the per-slot AoI sum, so the long-run average is
``d + E[X^2] / (2 E[X]) - 1/2``. The continuous-style accounting
``(2d + X)X/2`` drops the ``-1/2``.
"""

import math
from collections.abc import Iterator, Sequence

import numpy as np

from errors import InvalidThresholdsError
from log_config import get_logger
from models.results import RenewalMoments, ThresholdSummary

logger = get_logger(__name__)


def _check_inputs(p: float, d: int) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if d < 2:
        raise ValueError("d must be at least 2")


def _moments(d: int, mean_x: float, mean_x2: float) -> RenewalMoments:
    continuous = d + mean_x2 / (2.0 * mean_x)
    return RenewalMoments(
        mean_x=mean_x,
        mean_x2=mean_x2,
        avg_aoi=continuous - 0.5,
        avg_aoi_continuous=continuous,
    )


def _shifted_geometric(p: float, shift: float) -> tuple[float, float]:
    """First two moments of ``W + shift`` with ``W ~ Geometric(p)`` on 1, 2, ..."""
    return (
        1.0 / p + shift,
        (2.0 - p) / p**2 + 2.0 * shift / p + shift**2,
    )


def always_skip_moments(p: float, d: int) -> RenewalMoments:
    """Epoch length ``X = W + d - 1``: wait for an arrival, then serve it."""
    _check_inputs(p, d)
    mean_x, mean_x2 = _shifted_geometric(p, d - 1)
    return _moments(d, mean_x, mean_x2)


def order_violations(taus: Sequence[int], d: int) -> tuple[int, ...]:
    """Start slots ``i`` whose binding threshold is exceeded by ``tau_{i+1}``.

    ``tau_i = i + d - 1`` accepts every arrival until the update is delivered
    and puts no bound on the next slot. Any smaller ``tau_i`` caps
    ``tau_{i+1}``.
    """
    return tuple(
        i
        for i in range(1, len(taus))
        if taus[i - 1] < i + d - 1 and taus[i] > taus[i - 1]
    )


def validate_taus(taus: Sequence[int], d: int) -> None:
    for i, tau in enumerate(taus, start=1):
        if not i <= tau <= i + d - 1:
            raise InvalidThresholdsError(
                f"tau_{i}={tau} must lie in [{i}, {i + d - 1}]"
            )
    violations = order_violations(taus, d)
    if violations:
        i = violations[0]
        raise InvalidThresholdsError(
            f"binding thresholds must be non-increasing: tau_{i + 1}="
            f"{taus[i]} > tau_{i}={taus[i - 1]}"
        )


def threshold_policy_moments(
    p: float, d: int, taus: ThresholdSummary | Sequence[int]
) -> RenewalMoments:
    """Epoch moments under the threshold rule, with no truncation error.

    ``mass[i]`` is the probability that some update starts service in epoch
    slot ``i``. An update started at ``i <= K`` is preempted by the next
    arrival if it lands at ``j <= tau_i``; otherwise the epoch closes at slot
    ``i + d - 1``. First arrivals after slot ``K`` are never preempted and are
    summed in closed form.

    Raises:
        InvalidThresholdsError: If a binding threshold is followed by a larger
            one or some ``tau_i`` lies outside ``[i, i + d - 1]``.
    """
    _check_inputs(p, d)
    tau = list(taus.taus if isinstance(taus, ThresholdSummary) else taus)
    validate_taus(tau, d)
    k = len(tau)
    if k == 0:
        return always_skip_moments(p, d)

    q = 1.0 - p
    last = max(*tau, k)
    mass = np.zeros(last + 1)
    for i in range(1, k + 1):
        mass[i] = p * q ** (i - 1)

    mean_x = mean_x2 = 0.0
    for i in range(1, last + 1):
        if i <= k:
            for j in range(i + 1, tau[i - 1] + 1):
                mass[j] += mass[i] * p * q ** (j - i - 1)
            ends = mass[i] * q ** (tau[i - 1] - i)
        else:
            ends = mass[i]
        x = i + d - 1
        mean_x += ends * x
        mean_x2 += ends * x * x

    tail_x, tail_x2 = _shifted_geometric(p, k + d - 1)
    mean_x += q**k * tail_x
    mean_x2 += q**k * tail_x2
    return _moments(d, mean_x, mean_x2)


def threshold_vectors(d: int, max_saturated: int) -> Iterator[tuple[int, ...]]:
    """Valid vectors with ``tau_i > i`` and up to ``max_saturated`` saturated slots.

    A vector is ``m`` saturated thresholds ``tau_i = i + d - 1`` followed by
    a non-increasing tail of binding ones (``tau_i <= i + d - 2``). A binding
    tail needs ``i < tau_i <= m + d - 1``, so it has at most ``d - 2`` slots.
    """

    def tail(prefix: tuple[int, ...], cap: int) -> Iterator[tuple[int, ...]]:
        yield prefix
        i = len(prefix) + 1
        for tau in range(i + 1, min(cap, i + d - 2) + 1):
            yield from tail((*prefix, tau), tau)

    for m in range(max_saturated + 1):
        saturated = tuple(i + d - 1 for i in range(1, m + 1))
        yield from tail(saturated, m + d - 1)


def best_thresholds(
    p: float, d: int, max_saturated: int | None = None
) -> tuple[ThresholdSummary, RenewalMoments]:
    """Oracle-optimal threshold vector; the first strict minimum wins.

    ``max_saturated`` defaults to ``ceil(2 / p)`` slots, about twice the mean
    wait for an arrival.
    """
    _check_inputs(p, d)
    if max_saturated is None:
        max_saturated = math.ceil(2.0 / p)
    best: tuple[tuple[int, ...], RenewalMoments] | None = None
    scored = 0
    for taus in threshold_vectors(d, max_saturated):
        moments = threshold_policy_moments(p, d, taus)
        scored += 1
        if best is None or moments.avg_aoi < best[1].avg_aoi:
            best = (taus, moments)
    assert best is not None
    logger.debug("threshold_search_completed", p=p, d=d, scored=scored)
    return ThresholdSummary(taus=best[0]), best[1]
