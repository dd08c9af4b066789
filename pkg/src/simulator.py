"""Slot-level simulation of the status-update link under any policy.

Randomness comes from two Philox streams spawned from ``SeedSequence(seed)``:
stream 0 draws the arrival indicators and stream 1 the update sizes. Both are
drawn in bulk for the whole horizon and slot ``t`` uses element ``t - 1`` of
each, so two policies simulated with the same seed see the same arrivals.
"""

import csv
from pathlib import Path

import numpy as np
import numpy.typing as npt

from log_config import get_logger
from mdp import Action, Observation
from models.params import SimConfig, SizeDistribution
from models.results import Epoch, PolicyKind, SimStats, Trace, TrajectoryReport
from policies import Policy

logger = get_logger(__name__)

TRACE_COLUMNS = ("t", "delta", "u_or_l", "c", "b", "action", "delivered")


def streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent arrival and size generators for ``seed``."""
    arrival_seq, size_seq = np.random.SeedSequence(seed).spawn(2)
    return (
        np.random.Generator(np.random.Philox(arrival_seq)),
        np.random.Generator(np.random.Philox(size_seq)),
    )


def draw_arrivals(
    seed: int, horizon: int, p: float, sizes: SizeDistribution
) -> npt.NDArray[np.int64]:
    """Size of the update arriving in each slot, 0 where nothing arrives."""
    arrival_rng, size_rng = streams(seed)
    arrived = arrival_rng.random(horizon) < p
    if sizes.is_constant:
        drawn = np.full(horizon, sizes.support[0], dtype=np.int64)
    else:
        order = np.argsort(sizes.support)
        support = np.asarray(sizes.support, dtype=np.int64)[order]
        probs = np.asarray(sizes.probs, dtype=np.float64)[order]
        drawn = size_rng.choice(support, size=horizon, p=probs)
    return np.where(arrived, drawn, 0).astype(np.int64)


def batch_standard_error(aoi: npt.NDArray[np.int64], batches: int) -> float:
    """Standard error of the time average from non-overlapping batch means."""
    n = min(batches, len(aoi))
    if n < 2:
        return 0.0
    means = np.array([chunk.mean() for chunk in np.array_split(aoi, n)])
    return float(means.std(ddof=1) / np.sqrt(n))


def simulate(policy: Policy, cfg: SimConfig) -> SimStats:
    """Run ``policy`` for ``cfg.horizon`` slots.

    The link starts idle with AoI equal to the smallest update size. The AoI
    is not capped; tabular policies clamp it to their own cap on lookup.

    Raises:
        PolicyMismatchError: If the policy cannot serve ``cfg.sizes``.
    """
    policy.check_sizes(cfg.sizes)
    horizon = cfg.horizon
    arrivals = draw_arrivals(cfg.seed, horizon, cfg.p, cfg.sizes).tolist()

    aoi = np.empty(horizon, dtype=np.int64)
    if cfg.record_trace:
        u_or_l = np.zeros(horizon, dtype=np.int64)
        c_col = np.zeros(horizon, dtype=np.int64)
        act_col = np.zeros(horizon, dtype=np.int64)
        delivered_col = np.zeros(horizon, dtype=np.int64)
    uniform = cfg.sizes.is_constant and policy.kind is not PolicyKind.TABULAR_NONUNIFORM

    delta = cfg.sizes.b_min
    remaining = size = service_slot = 0
    epoch_slot = 1
    epoch_start_aoi = delta
    epoch_sum = 0
    epochs: list[Epoch] = []
    switches = starts = skips = 0

    for t in range(horizon):
        b = arrivals[t]
        aoi[t] = delta
        epoch_sum += delta
        action = Action.SKIP
        if b:
            action = policy.decide(
                Observation(delta, remaining, size, b, epoch_slot, service_slot)
            )
            if action is Action.SWITCH:
                if size:
                    switches += 1
                else:
                    starts += 1
            else:
                skips += 1

        if cfg.record_trace:
            u_or_l[t] = (size - remaining if size else 0) if uniform else remaining
            c_col[t] = size
            act_col[t] = action

        if action is Action.SWITCH:
            remaining, size, service_slot = b - 1, b, epoch_slot
            delta += 1
            epoch_slot += 1
        elif remaining == 1:
            if cfg.record_trace:
                delivered_col[t] = size
            epochs.append(
                Epoch(
                    length=epoch_slot,
                    reset=size,
                    start_aoi=epoch_start_aoi,
                    aoi_sum=epoch_sum,
                )
            )
            delta = epoch_start_aoi = size
            remaining = size = service_slot = 0
            epoch_slot = 1
            epoch_sum = 0
        else:
            if remaining:
                remaining -= 1
            delta += 1
            epoch_slot += 1

    cumulative = float(aoi.sum())
    trace = None
    if cfg.record_trace:
        trace = Trace(
            delta=aoi.copy(),
            u_or_l=u_or_l,
            c=c_col,
            b=np.asarray(arrivals, dtype=np.int64),
            action=act_col,
            delivered=delivered_col,
            uniform=uniform,
        )
    stats = SimStats(
        horizon=horizon,
        seed=cfg.seed,
        time_avg_aoi=cumulative / horizon,
        cumulative_aoi=cumulative,
        continuous_aoi=cumulative + horizon / 2,
        standard_error=batch_standard_error(aoi, cfg.batches),
        delivered=len(epochs),
        switches=switches,
        starts=starts,
        skips=skips,
        epochs=epochs,
        trace=trace,
    )
    logger.debug(
        "simulation_completed",
        policy=policy.label,
        seed=cfg.seed,
        horizon=horizon,
        time_avg_aoi=stats.time_avg_aoi,
        delivered=stats.delivered,
    )
    return stats


def epoch_decompose(trace: Trace) -> list[Epoch]:
    """Split a trace at its deliveries; slots after the last delivery are dropped."""
    epochs: list[Epoch] = []
    start = 0
    for end in np.flatnonzero(trace.delivered):
        window = trace.delta[start : end + 1]
        epochs.append(
            Epoch(
                length=len(window),
                reset=int(trace.delivered[end]),
                start_aoi=int(window[0]),
                aoi_sum=int(window.sum()),
            )
        )
        start = int(end) + 1
    return epochs


def check_trajectory_laws(trace: Trace) -> TrajectoryReport:
    """Check every epoch for a switch after a skip and for idle skips.

    A busy skip followed by a later switch in the same epoch breaks the
    sequential-switching property; dropping an arrival while idle breaks the
    idle-start rule.
    """
    epochs = ss_bad = idle_bad = 0
    first: int | None = None
    skipped = epoch_ss = epoch_idle = False
    for t in range(len(trace)):
        if trace.b[t]:
            busy = trace.c[t] > 0
            if trace.action[t] == Action.SWITCH:
                if busy and skipped:
                    epoch_ss = True
                    first = t + 1 if first is None else first
            elif busy:
                skipped = True
            else:
                epoch_idle = True
                first = t + 1 if first is None else first
        if trace.delivered[t]:
            epochs += 1
            ss_bad += epoch_ss
            idle_bad += epoch_idle
            skipped = epoch_ss = epoch_idle = False
    return TrajectoryReport(
        epochs_checked=epochs,
        ss_violations=ss_bad,
        idle_violations=idle_bad,
        first_violation_slot=first,
    )


def write_trace(trace: Trace, path: Path) -> None:
    """Per-slot CSV (RFC 4180, CRLF line endings)."""
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        writer.writerows(
            zip(
                range(1, len(trace) + 1),
                trace.delta.tolist(),
                trace.u_or_l.tolist(),
                trace.c.tolist(),
                trace.b.tolist(),
                trace.action.tolist(),
                trace.delivered.tolist(),
                strict=True,
            )
        )
