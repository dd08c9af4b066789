"""Formatting of experiment artifacts: CSV tables, JSON documents, console text."""

import csv
import json
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from mdp import PolicyTable
from model_nonuniform import NonUniformMDP
from model_uniform import UniformMDP, UniformState
from models.params import UniformParams
from models.results import (
    SimStats,
    SolveSummary,
    StructureReport,
    SweepRow,
    ThresholdSummary,
)
from solver import epoch_policy_map

SWEEP_COLUMNS = (
    "p",
    "J_opt",
    "sim_opt",
    "sim_skip",
    "sim_switch",
    "gap_skip_minus_opt",
    "se_opt",
    "se_skip",
    "se_switch",
)
UNIFORM_MAP_COLUMNS = ("delta", "u", "action")
EPOCH_MAP_COLUMNS = ("service_slot", "arrival_slot", "action")
NONUNIFORM_MAP_COLUMNS = ("c", "b", "delta", "l", "action")


def format_cell(value: Any) -> str:
    """Render one CSV cell; floats use 12 significant digits.

    Args:
        value: Cell value.

    Returns:
        The cell text.
    """
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """Write an RFC 4180 CSV file (UTF-8, CRLF, header first).

    Args:
        path: Destination file.
        header: Column names.
        rows: Data rows.

    Returns:
        Number of data rows written.
    """
    count = 0
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
            count += 1
    return count


def write_json(path: Path, payload: BaseModel | dict[str, Any]) -> None:
    """Write a model or plain mapping as indented JSON.

    Args:
        path: Destination file.
        payload: Pydantic model or JSON-compatible dict.
    """
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=2, by_alias=True)
    else:
        text = json.dumps(payload, indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")


def sweep_row_cells(row: SweepRow) -> list[float]:
    data = row.model_dump(by_alias=True)
    return [float(data[col]) for col in SWEEP_COLUMNS]


def uniform_policy_rows(policy: PolicyTable) -> list[tuple[int, int, int]]:
    """``(delta, u, action)`` for every state with an arrival.

    Args:
        policy: Uniform-model policy table.

    Returns:
        Rows in ascending ``(delta, u)`` order.
    """
    mdp = policy.mdp
    assert isinstance(mdp, UniformMDP)
    return [
        (int(delta), u, int(policy[UniformState(int(delta), u, 1)]))
        for delta in mdp.delta_values
        for u in range(mdp.uniform.d)
    ]


def epoch_policy_rows(
    policy: PolicyTable, params: UniformParams
) -> list[tuple[int, int, int]]:
    return [(i, j, int(action)) for i, j, action in epoch_policy_map(policy, params)]


def nonuniform_policy_rows(policy: PolicyTable) -> list[tuple[int, int, int, int, int]]:
    """``(c, b, delta, l, action)`` for every busy state with an arrival.

    Args:
        policy: Non-uniform-model policy table.

    Returns:
        Rows grouped by ``(c, b)`` panel, then ascending ``delta`` and ``l``.
    """
    mdp = policy.mdp
    assert isinstance(mdp, NonUniformMDP)
    rows = [
        (c, b, int(delta), l, int(action))
        for (delta, l, c, b), action in policy.items()  # noqa: E741
        if c > 0 and b > 0
    ]
    return sorted(rows)


def format_solve_result(
    summary: SolveSummary,
    thresholds: ThresholdSummary | None = None,
    structure: StructureReport | None = None,
) -> str:
    """Short console report of a solve run.

    Args:
        summary: Solver summary.
        thresholds: Extracted thresholds (uniform model).
        structure: Structural-property report (non-uniform model).

    Returns:
        Multi-line text.
    """
    status = "converged" if summary.converged else "NOT converged"
    lines = [
        f"{summary.model} model, {summary.n_states} states",
        f"gain J = {summary.gain:.6f} ({status} after {summary.iterations_run} "
        f"iterations, span {summary.span:.3g})",
    ]
    if thresholds is not None:
        taus = ", ".join(str(t) for t in thresholds.taus) or "none"
        lines.append(f"thresholds (K={thresholds.k}): {taus}")
        if thresholds.order_violations:
            lines.append(f"order violations at i = {list(thresholds.order_violations)}")
    if structure is not None:
        verdict = "all hold" if structure.ok else "VIOLATED"
        lines.append(f"structural properties: {verdict}")
    return "\n".join(lines)


def format_sim_result(stats: SimStats, label: str) -> str:
    return (
        f"{label}: average AoI {stats.time_avg_aoi:.6f} "
        f"(+/- {stats.standard_error:.3g}) over {stats.horizon} slots, "
        f"{stats.delivered} deliveries, {stats.switches} switches, "
        f"{stats.skips} skips"
    )
