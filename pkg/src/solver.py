"""Average-cost and discounted value iteration for the skip/switch MDPs.

All solvers work on the sparse transition matrices of a :class:`TabularMDP`.
One Bellman sweep computes both action values for every state at once; the
only per-solver difference is how a sweep turns those values into actions
(plain greedy choice, or the structured shortcuts that reuse decisions
already taken at neighbouring states).
"""

import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from errors import ThresholdStructureError
from log_config import get_logger
from mdp import Action, ActionArray, FloatArray, PolicyTable, TabularMDP, ValueFunction
from model_nonuniform import NonUniformMDP
from model_nonuniform import build_mdp as build_nonuniform
from model_uniform import UniformMDP, UniformState
from model_uniform import build_mdp as build_uniform
from models.params import DEFAULT_ITERS, DEFAULT_TOL, NonUniformParams, UniformParams
from models.results import StructureReport, ThresholdSummary
from renewal_oracle import order_violations

logger = get_logger(__name__)

__all__ = [
    "Action",
    "PolicyTable",
    "ValueFunction",
    "check_uniform_structure",
    "cycle_gains",
    "decode_policy",
    "discounted_value_iteration",
    "encode_policy",
    "enumerate_uniform_policies",
    "epoch_policy_map",
    "evaluate_policy",
    "extract_thresholds",
    "nonuniform_structure_report",
    "relative_value_iteration",
    "structured_vi_nonuniform",
    "structured_vi_uniform",
]

# Q(s;1) must beat Q(s;0) by more than this to switch.
TIE_TOL = 1e-9

BoolArray = npt.NDArray[np.bool_]
Decide = Callable[[TabularMDP, FloatArray, FloatArray], ActionArray]


def _q_values(
    mdp: TabularMDP, h: FloatArray, alpha: float = 1.0
) -> tuple[FloatArray, FloatArray]:
    q_skip = mdp.cost + alpha * (mdp.p_skip @ h)
    q_switch = np.where(mdp.can_switch, mdp.cost + alpha * (mdp.p_switch @ h), np.inf)
    return q_skip, q_switch


def _greedy_mask(q_skip: FloatArray, q_switch: FloatArray) -> BoolArray:
    return np.asarray(q_switch < q_skip - TIE_TOL)


def greedy_actions(
    mdp: TabularMDP, q_skip: FloatArray, q_switch: FloatArray
) -> ActionArray:
    return _greedy_mask(q_skip, q_switch).astype(np.int8)


def _run_rvi(
    mdp: TabularMDP,
    decide: Decide,
    max_iters: int,
    tol: float,
    *,
    structured: bool,
) -> tuple[ValueFunction, PolicyTable]:
    """Relative value iteration normalised at the reference state.

    ``h_{n+1} = T h_n - (T h_n)(s0)`` from ``h_0 = 0``; stops once the span of
    ``h_{n+1} - h_n`` drops below ``tol``.
    """
    if max_iters < 1 or tol <= 0:
        raise ValueError("max_iters must be >= 1 and tol > 0")
    start = time.perf_counter()
    ref = mdp.reference
    h = np.zeros(mdp.n_states)
    span = np.inf
    n = 0
    for n in range(1, max_iters + 1):
        q_skip, q_switch = _q_values(mdp, h)
        actions = decide(mdp, q_skip, q_switch)
        th = np.where(actions == Action.SWITCH, q_switch, q_skip)
        h_next = th - th[ref]
        diff = h_next - h
        span = float(diff.max() - diff.min())
        h = h_next
        if span < tol:
            break

    q_skip, q_switch = _q_values(mdp, h)
    actions = decide(mdp, q_skip, q_switch)
    th = np.where(actions == Action.SWITCH, q_switch, q_skip)
    gain = float(th[ref] - h[ref])
    converged = span < tol

    log_kwargs = {
        "model": mdp.name,
        "structured": structured,
        "iterations": n,
        "span": span,
        "gain": gain,
        "elapsed_ms": round((time.perf_counter() - start) * 1000),
    }
    if converged:
        logger.info("rvi_converged", **log_kwargs)
    else:
        logger.warning("rvi_not_converged", tol=tol, **log_kwargs)

    value = ValueFunction(
        mdp=mdp, values=h, gain=gain, iterations_run=n, span=span, converged=converged
    )
    return value, PolicyTable(mdp, actions)


def relative_value_iteration(
    model: TabularMDP, max_iters: int = DEFAULT_ITERS, tol: float = DEFAULT_TOL
) -> tuple[ValueFunction, PolicyTable]:
    """Plain RVI on either truncated model (greedy choice, ties go to skip)."""
    return _run_rvi(model, greedy_actions, max_iters, tol, structured=False)


# Structured sweeps
#
# A sequential sweep visits states by ascending AoI within each column and
# lets a decision copy one taken earlier in the same sweep. Along the AoI
# axis the "skip below forces skip" rule is a cumulative AND, so each column
# reduces to one accumulate once the columns it depends on are settled.


def _uniform_decide(
    mdp: TabularMDP, q_skip: FloatArray, q_switch: FloatArray
) -> ActionArray:
    assert isinstance(mdp, UniformMDP)
    greedy = mdp.grid(_greedy_mask(q_skip, q_switch))
    out = np.zeros((mdp.n_rows, mdp.n_cols), dtype=bool)
    switched = np.zeros(mdp.n_rows, dtype=bool)  # some busy u' < u switched
    for u in range(mdp.uniform.d):
        k = mdp.col_index[(u, 1)]
        free = greedy[:, k] if u == 0 else switched | greedy[:, k]
        out[:, k] = np.logical_and.accumulate(free)
        if u > 0:
            switched |= out[:, k]
    return out.reshape(-1).astype(np.int8)


def _nonuniform_decide(
    mdp: TabularMDP, q_skip: FloatArray, q_switch: FloatArray
) -> ActionArray:
    assert isinstance(mdp, NonUniformMDP)
    support = sorted(mdp.nonuniform.f_b.support)
    greedy = mdp.grid(_greedy_mask(q_skip, q_switch))
    out = np.zeros((mdp.n_rows, mdp.n_cols), dtype=bool)
    pending: list[tuple[int, int, int]] = []
    for l, c, b in mdp.columns:  # noqa: E741
        if b == 0:
            continue
        k = mdp.col_index[(l, c, b)]
        if c == 0 or b <= l:
            out[:, k] = True  # idle start, or the arrival finishes first
        else:
            pending.append((l, c, b))

    # c descending then b descending: larger neighbours are settled first.
    pending.sort(key=lambda col: (col[0], -col[1], -col[2]))
    for l, c, b in pending:  # noqa: E741
        k = mdp.col_index[(l, c, b)]
        skip_larger_c = np.zeros(mdp.n_rows, dtype=bool)
        for c2 in support:
            if c2 > c and l <= c2 - 1:
                skip_larger_c |= ~out[:, mdp.col_index[(l, c2, b)]]
        switch_larger_b = np.zeros(mdp.n_rows, dtype=bool)
        for b2 in support:
            if b2 > b:
                switch_larger_b |= out[:, mdp.col_index[(l, c, b2)]]
        free = ~skip_larger_c & (switch_larger_b | greedy[:, k])
        out[:, k] = np.logical_and.accumulate(free)
    return out.reshape(-1).astype(np.int8)


def structured_vi_uniform(
    params: UniformParams, max_iters: int = DEFAULT_ITERS, tol: float = DEFAULT_TOL
) -> tuple[ValueFunction, PolicyTable]:
    return _run_rvi(
        build_uniform(params), _uniform_decide, max_iters, tol, structured=True
    )


def structured_vi_nonuniform(
    params: NonUniformParams, max_iters: int = DEFAULT_ITERS, tol: float = DEFAULT_TOL
) -> tuple[ValueFunction, PolicyTable]:
    return _run_rvi(
        build_nonuniform(params), _nonuniform_decide, max_iters, tol, structured=True
    )


def discounted_value_iteration(
    model: TabularMDP,
    alpha: float,
    max_iters: int = DEFAULT_ITERS,
    tol: float = DEFAULT_TOL,
) -> ValueFunction:
    """Discounted value iteration from ``V = 0``.

    The returned ``gain`` is ``(1 - alpha) * V(s0)``, which tends to the
    average-cost gain as ``alpha`` approaches 1.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    v = np.zeros(model.n_states)
    change = np.inf
    n = 0
    for n in range(1, max_iters + 1):
        q_skip, q_switch = _q_values(model, v, alpha)
        v_next = np.minimum(q_skip, q_switch)
        change = float(np.max(np.abs(v_next - v)))
        v = v_next
        if change < tol:
            break
    converged = change < tol
    if not converged:
        logger.warning(
            "discounted_vi_not_converged", alpha=alpha, iterations=n, change=change
        )
    return ValueFunction(
        mdp=model,
        values=v,
        gain=float((1.0 - alpha) * v[model.reference]),
        iterations_run=n,
        span=change,
        converged=converged,
    )


def evaluate_policy(
    model: TabularMDP,
    policy: PolicyTable,
    max_iters: int = DEFAULT_ITERS,
    tol: float = DEFAULT_TOL,
) -> float:
    """Long-run average AoI of ``policy`` on the truncated model."""
    transition = model.policy_matrix(policy.actions)
    cost = model.cost
    ref = model.reference
    h = np.zeros(model.n_states)
    span = np.inf
    n = 0
    for n in range(1, max_iters + 1):
        th = cost + transition @ h
        h_next = th - th[ref]
        diff = h_next - h
        span = float(diff.max() - diff.min())
        h = h_next
        if span < tol:
            break
    gain = float((cost + transition @ h)[ref] - h[ref])
    if span >= tol:
        logger.warning(
            "policy_evaluation_not_converged", iterations=n, span=span, gain=gain
        )
    return gain


# Threshold structure of uniform policies


def _arrival_action(policy: PolicyTable, delta: int, u: int) -> Action:
    return policy[UniformState(delta, u, 1)]


def extract_thresholds(policy: PolicyTable, params: UniformParams) -> ThresholdSummary:
    """Read per-slot thresholds off a uniform policy table.

    An update that started in epoch slot ``i`` is in service at age
    ``u = j - i`` when a new update arrives in epoch slot ``j``, which is the
    state ``(j + d - 1, u, 1)``. Only start slots whose whole service window
    stays below the AoI cap are read.

    ``tau_i = i + d - 1`` means every arrival during that service is taken.
    Small ``p`` gives a run of such saturated slots before the binding,
    non-increasing ones (d=10, p=0.07 reads ``(10, 11, 10, 9, 8, 7)``).
    Binding slots followed by a larger threshold are reported as order
    violations.

    Raises:
        ThresholdStructureError: If some start slot switches at a later
            arrival slot after skipping at an earlier one.
    """
    d, cap = params.d, params.delta_max
    last_start = cap - 2 * d + 2
    taus: list[int] = []
    for i in range(1, last_start + 1):
        tau = i
        first_skip: int | None = None
        for j in range(i + 1, i + d):
            if _arrival_action(policy, j + d - 1, j - i) is Action.SWITCH:
                if first_skip is not None:
                    raise ThresholdStructureError(i, j, first_skip)
                tau = j
            elif first_skip is None:
                first_skip = j
        taus.append(tau)

    k = max((i for i, tau in enumerate(taus, start=1) if tau > i), default=0)
    kept = tuple(taus[:k])
    violations = order_violations(kept, d)
    for i in violations:
        logger.warning(
            "threshold_order_violation", slot=i, tau=kept[i - 1], next_tau=kept[i]
        )
    return ThresholdSummary(taus=kept, order_violations=violations)


def epoch_policy_map(
    policy: PolicyTable, params: UniformParams
) -> list[tuple[int, int, Action]]:
    """``(i, j, action)`` for every start slot ``i`` and arrival slot ``j``."""
    d, cap = params.d, params.delta_max
    rows: list[tuple[int, int, Action]] = []
    for i in range(1, cap - 2 * d + 3):
        for j in range(i + 1, i + d):
            rows.append((i, j, _arrival_action(policy, j + d - 1, j - i)))
    return rows


def check_uniform_structure(policy: PolicyTable) -> dict[str, int]:
    """Count states breaking the AoI and age monotonicity of switching.

    ``skip_persists_in_delta``: skip at ``(delta, u, 1)`` but switch at
    ``(delta + 1, u, 1)``. ``switch_persists_in_age``: switch at a busy age
    ``u`` but skip at ``u + 1`` for the same AoI.
    """
    mdp = policy.mdp
    assert isinstance(mdp, UniformMDP)
    grid = mdp.grid(policy.actions)
    d = mdp.uniform.d
    arrival_cols = [mdp.col_index[(u, 1)] for u in range(d)]
    a = grid[:, arrival_cols]
    in_delta = int(np.sum((a[:-1] == 0) & (a[1:] == 1)))
    in_age = int(np.sum((a[:, 1:-1] == 1) & (a[:, 2:] == 0))) if d > 2 else 0
    return {"skip_persists_in_delta": in_delta, "switch_persists_in_age": in_age}


def nonuniform_structure_report(policy: PolicyTable) -> StructureReport:
    """Count states at which a non-uniform policy breaks its known structure.

    A busy state (l, c) is reachable only with ``delta >= b_min + c - l``: the
    update started at an AoI of at least ``b_min``. Switches away from the
    shortest update to the longest arrival are counted over reachable rows.
    """
    mdp = policy.mdp
    assert isinstance(mdp, NonUniformMDP)
    support = sorted(mdp.nonuniform.f_b.support)
    grid = mdp.grid(policy.actions).astype(bool)
    n = mdp.n_rows

    smaller_b = larger_c = small_b = idle = persist = min_max = 0
    checked = 0
    for l, c, b in mdp.columns:  # noqa: E741
        if b == 0:
            continue
        col = grid[:, mdp.col_index[(l, c, b)]]
        checked += n
        if c == 0:
            idle += int(np.sum(~col))
            continue
        if b <= l:
            small_b += int(np.sum(~col))
        bad = np.zeros(n, dtype=bool)
        for b2 in support:
            if b2 < b:
                bad |= col & ~grid[:, mdp.col_index[(l, c, b2)]]
        smaller_b += int(np.sum(bad))
        bad = np.zeros(n, dtype=bool)
        for c2 in support:
            if c2 > c and l <= c2 - 1:
                bad |= col & ~grid[:, mdp.col_index[(l, c2, b)]]
        larger_c += int(np.sum(bad))
        persist += int(np.sum(~col[:-1] & col[1:]))
        if len(support) > 1 and c == support[0] and b == support[-1]:
            min_max += int(np.sum(col[c - l :]))  # row = delta - b_min

    return StructureReport(
        switch_implies_smaller_arrival=smaller_b,
        small_arrival_switches=small_b,
        switch_implies_larger_service=larger_c,
        idle_arrival_switches=idle,
        skip_persists_in_delta=persist,
        min_service_max_arrival_switches=min_max,
        states_checked=checked,
    )


# Exhaustive search over deterministic uniform policies
#
# A policy is an integer code whose bit ``row * d + u`` is the action at
# ``(d + row, u, 1)``. Deliveries regenerate the chain at ``(d, 0, .)``, so
# every policy's gain is E[cycle cost] / E[cycle length]. Below the cap the
# AoI of a cycle is fixed by its slot count and the mass is pushed level by
# level; at the cap the remaining time solves a small linear system.

MAX_ENUMERATION_BITS = 26
CHUNK = 1 << 16


@dataclass(frozen=True)
class EnumerationResult:
    best_gain: float
    best_codes: list[int]
    n_policies: int


def encode_policy(policy: PolicyTable) -> int:
    mdp = policy.mdp
    assert isinstance(mdp, UniformMDP)
    d = mdp.uniform.d
    code = 0
    for row in range(mdp.n_rows):
        delta = mdp.delta_min + row
        for u in range(d):
            if policy[UniformState(delta, u, 1)] is Action.SWITCH:
                code |= 1 << (row * d + u)
    return code


def decode_policy(code: int, mdp: UniformMDP) -> PolicyTable:
    d = mdp.uniform.d
    actions = np.zeros(mdp.n_states, dtype=np.int8)
    for row in range(mdp.n_rows):
        for u in range(d):
            if code >> (row * d + u) & 1:
                actions[row * mdp.n_cols + mdp.col_index[(u, 1)]] = 1
    return PolicyTable(mdp, actions)


def cycle_gains(codes: npt.NDArray[np.int64], params: UniformParams) -> FloatArray:
    """Exact average AoI of a batch of policy codes."""
    d, p, cap = params.d, params.p, params.delta_max
    n_rows = cap - d + 1
    codes = np.asarray(codes, dtype=np.int64)
    batch = len(codes)
    ages = np.arange(d)

    def switch_bits(row: int) -> BoolArray:
        return np.asarray((codes[:, None] >> (row * d + ages)) & 1, dtype=bool)

    core = np.zeros((batch, d))
    core[:, 0] = 1.0
    cost = np.zeros(batch)
    length = np.zeros(batch)
    for row in range(n_rows - 1):
        mass = core.sum(axis=1)
        cost += (d + row) * mass
        length += mass
        sw = switch_bits(row)
        nxt = np.zeros_like(core)
        for u in range(d):
            arrive = p * core[:, u]
            quiet = (1.0 - p) * core[:, u]
            nxt[:, 1] += np.where(sw[:, u], arrive, 0.0)
            if u < d - 1:
                target = 0 if u == 0 else u + 1
                nxt[:, target] += quiet + np.where(sw[:, u], 0.0, arrive)
        core = nxt

    sw = switch_bits(n_rows - 1)
    stuck = ~sw[:, 0]  # idle at the cap and never starting: AoI stays at cap
    m = np.zeros((batch, d, d))
    for u in range(d):
        if u < d - 1:
            m[:, u, 0 if u == 0 else u + 1] += 1.0 - p
            m[:, u, 0 if u == 0 else u + 1] += np.where(sw[:, u], 0.0, p)
        m[:, u, 1] += np.where(sw[:, u], p, 0.0)
    system = np.eye(d) - m
    system[stuck] = np.eye(d)
    remaining = np.linalg.solve(system, np.ones((batch, d, 1)))[..., 0]
    tail = np.sum(core * remaining, axis=1)
    cost += cap * tail
    length += tail
    return np.where(stuck, float(cap), cost / length)


def enumerate_uniform_policies(
    params: UniformParams, *, rtol: float = 1e-9, keep: int = 1024
) -> EnumerationResult:
    """Score every deterministic stationary policy of a small uniform model.

    Policies that differ only at states they never visit tie; ``best_codes``
    keeps the first ``keep`` codes that reach the minimum.
    """
    n_bits = (params.delta_max - params.d + 1) * params.d
    if n_bits > MAX_ENUMERATION_BITS:
        raise ValueError(f"{n_bits} decision states is too many to enumerate")
    total = 1 << n_bits
    chunk_gains: list[tuple[int, FloatArray]] = []
    best = np.inf
    for lo in range(0, total, CHUNK):
        codes = np.arange(lo, min(lo + CHUNK, total), dtype=np.int64)
        gains = cycle_gains(codes, params)
        best = min(best, float(gains.min()))
        chunk_gains.append((lo, gains.astype(np.float32)))

    # float32 keeps 2^26 gains in memory; ties are re-checked in float64.
    best_codes: list[int] = []
    for lo, gains in chunk_gains:
        near = np.flatnonzero(gains <= best * (1.0 + 1e-6)) + lo
        if near.size == 0:
            continue
        exact = cycle_gains(near.astype(np.int64), params)
        best_codes.extend(int(c) for c in near[exact <= best * (1.0 + rtol)])
        if len(best_codes) >= keep:
            best_codes = best_codes[:keep]
            break
    logger.info(
        "policy_enumeration_completed",
        n_policies=total,
        best_gain=best,
        n_kept=len(best_codes),
    )
    return EnumerationResult(best_gain=best, best_codes=best_codes, n_policies=total)
