"""Experiment driver: solve, simulate, sweep and export figure data.

Every subcommand accepts ``--config FILE`` (a JSON experiment description);
flags given on the command line override values from the file. Artifacts are
written into the ``--out`` directory.
"""

import argparse
import json
import multiprocessing
import time
from collections.abc import Sequence
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from config import get_settings
from errors import (
    InvalidStateError,
    InvalidThresholdsError,
    PolicyMismatchError,
    ThresholdStructureError,
)
from log_config import bind_experiment, experiment_context, get_logger, init_worker
from mdp import PolicyTable, ValueFunction
from model_nonuniform import build_mdp as build_nonuniform
from model_uniform import build_mdp as build_uniform
from models.params import (
    ExperimentConfig,
    Mode,
    ModelKind,
    SimConfig,
    SizeDistribution,
)
from models.results import PolicyKind, SimStats, SolveSummary, SweepRow
from policies import (
    AlwaysSkip,
    AlwaysSwitch,
    Policy,
    TabularPolicy,
    load_policy,
    save_policy,
)
from report_formatter import (
    EPOCH_MAP_COLUMNS,
    NONUNIFORM_MAP_COLUMNS,
    SWEEP_COLUMNS,
    UNIFORM_MAP_COLUMNS,
    epoch_policy_rows,
    format_sim_result,
    format_solve_result,
    nonuniform_policy_rows,
    sweep_row_cells,
    uniform_policy_rows,
    write_csv,
    write_json,
)
from simulator import simulate, write_trace
from solver import (
    extract_thresholds,
    nonuniform_structure_report,
    relative_value_iteration,
    structured_vi_nonuniform,
    structured_vi_uniform,
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO = 4
EXIT_STRUCTURE = 5

DEFAULT_OUT = Path("out")
FIGURE_GRID = [0.01, 0.02, 0.03, 0.05, 0.07, 0.1, 0.15, 0.2, 0.25, 0.3]
PAIRED_SIZES = "5:0.5,8:0.5"
FIGURE_DEFAULTS: dict[str, dict[str, Any]] = {
    "uniform-map": {"model": ModelKind.UNIFORM, "d": 10, "p": 0.07},
    "epoch-map": {"model": ModelKind.UNIFORM, "d": 10, "p": 0.07},
    "nonuniform-map": {"model": ModelKind.NONUNIFORM, "sizes": PAIRED_SIZES, "p": 0.14},
    "aoi-vs-p": {"model": ModelKind.UNIFORM, "d": 10},
    "gap-vs-p": {"model": ModelKind.UNIFORM, "d": 10},
    "nonuniform-aoi-vs-p": {"model": ModelKind.NONUNIFORM, "sizes": PAIRED_SIZES},
}
AOI_COLUMNS = (
    "p", "sim_opt", "sim_skip", "sim_switch", "se_opt", "se_skip", "se_switch"
)
FIGURE_SWEEP_COLUMNS = {
    "aoi-vs-p": AOI_COLUMNS,
    "gap-vs-p": ("p", "gap_skip_minus_opt", "se_opt", "se_skip"),
    "nonuniform-aoi-vs-p": AOI_COLUMNS,
}


# Argument parsing


def _p_grid(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoi", description="Skip/switch AoI solver and simulator."
    )
    sub = parser.add_subparsers(dest="mode", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment file")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--p", type=float, help="arrival probability per slot")
    common.add_argument("--d", type=int, help="uniform update size in slots")
    common.add_argument("--sizes", help='size PMF, e.g. "5:0.5,8:0.5"')
    common.add_argument("--delta-max", dest="delta_max", type=int)
    common.add_argument("--iters", type=int, help="maximum value-iteration sweeps")
    common.add_argument("--tol", type=float, help="span stopping tolerance")
    common.add_argument(
        "--plain",
        dest="structured",
        action="store_const",
        const=False,
        help="use plain RVI instead of the structured sweeps",
    )

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--T", dest="horizon", type=int, help="slots per run")
    sim.add_argument(
        "--seed", dest="seeds", type=int, action="append", help="repeatable"
    )

    sub.add_parser(Mode.SOLVE_UNIFORM.value, parents=[common])
    sub.add_parser(Mode.SOLVE_NONUNIFORM.value, parents=[common])

    p_sim = sub.add_parser(Mode.SIMULATE.value, parents=[common, sim])
    p_sim.add_argument("--policy", type=Path, help="policy JSON document")
    p_sim.add_argument("--trace", type=Path, help="per-slot trace CSV")

    p_sweep = sub.add_parser(Mode.SWEEP.value, parents=[common, sim])
    p_sweep.add_argument("--model", choices=[m.value for m in ModelKind])
    p_sweep.add_argument("--p-grid", dest="p_grid", type=_p_grid)

    p_fig = sub.add_parser(Mode.FIGURE.value, parents=[common, sim])
    p_fig.add_argument("--which", choices=sorted(FIGURE_DEFAULTS))
    p_fig.add_argument("--p-grid", dest="p_grid", type=_p_grid)
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge the optional config file with explicit flags (flags win)."""
    data: dict[str, Any] = {}
    if args.config is not None:
        data = json.loads(args.config.read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
    flags = {
        k: v
        for k, v in vars(args).items()
        if k not in {"config", "mode"} and v is not None
    }
    data.update(flags)
    data["mode"] = args.mode
    return ExperimentConfig.model_validate(data)


# Shared steps


def _out_dir(config: ExperimentConfig) -> Path:
    out = config.out or DEFAULT_OUT
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solve(config: ExperimentConfig) -> tuple[ValueFunction, PolicyTable]:
    if config.model is ModelKind.UNIFORM:
        params = config.uniform_params()
        if config.structured:
            return structured_vi_uniform(params, config.iters, config.tol)
        return relative_value_iteration(build_uniform(params), config.iters, config.tol)
    nu_params = config.nonuniform_params()
    if config.structured:
        return structured_vi_nonuniform(nu_params, config.iters, config.tol)
    return relative_value_iteration(
        build_nonuniform(nu_params), config.iters, config.tol
    )


def _summary(
    config: ExperimentConfig, value: ValueFunction, table: PolicyTable, elapsed: float
) -> SolveSummary:
    return SolveSummary(
        model=table.mdp.name,
        params=table.mdp.params.model_dump(mode="json"),
        structured=config.structured,
        gain=value.gain,
        iterations_run=value.iterations_run,
        span=value.span,
        converged=value.converged,
        n_states=table.mdp.n_states,
        value_min=float(value.values.min()),
        value_max=float(value.values.max()),
        switch_states=int(table.actions.sum()),
        elapsed_s=round(elapsed, 3),
    )


def _sizes(config: ExperimentConfig) -> SizeDistribution:
    if config.model is ModelKind.UNIFORM:
        return SizeDistribution.constant(config.uniform_params().d)
    return config.nonuniform_params().f_b


def _simulate_seeds(
    policy: Policy, config: ExperimentConfig, p: float, sizes: SizeDistribution
) -> tuple[float, float]:
    """Mean time-average AoI over the configured seeds and its standard error."""
    runs = [
        simulate(policy, SimConfig(horizon=config.horizon, seed=s, p=p, sizes=sizes))
        for s in config.seeds
    ]
    mean = float(np.mean([r.time_avg_aoi for r in runs]))
    se = float(np.sqrt(sum(r.standard_error**2 for r in runs)) / len(runs))
    return mean, se


# Modes


def solve_uniform(config: ExperimentConfig) -> int:
    start = time.perf_counter()
    value, table = _solve(config)
    summary = _summary(config, value, table, time.perf_counter() - start)
    out = _out_dir(config)
    save_policy(TabularPolicy(table), out / "policy.json")
    write_json(out / "summary.json", summary)
    thresholds = extract_thresholds(table, config.uniform_params())
    write_json(out / "thresholds.json", thresholds)
    print(format_solve_result(summary, thresholds=thresholds))
    return EXIT_OK if value.converged else EXIT_NOT_CONVERGED


def solve_nonuniform(config: ExperimentConfig) -> int:
    start = time.perf_counter()
    value, table = _solve(config)
    summary = _summary(config, value, table, time.perf_counter() - start)
    structure = nonuniform_structure_report(table)
    out = _out_dir(config)
    save_policy(TabularPolicy(table), out / "policy.json")
    write_json(out / "summary.json", summary)
    write_json(out / "structure.json", structure)
    print(format_solve_result(summary, structure=structure))
    return EXIT_OK if value.converged else EXIT_NOT_CONVERGED


def _policy_inputs(
    config: ExperimentConfig, policy: Policy
) -> tuple[float, SizeDistribution]:
    """Arrival rate and size law, falling back to what the policy was solved for."""
    params = policy.params()
    p = config.p if config.p is not None else params.get("p")
    if p is None:
        raise ValueError("simulate needs --p for this policy kind")
    if config.sizes is not None:
        return p, config.sizes
    if config.d is not None:
        return p, SizeDistribution.constant(config.d)
    if policy.kind is PolicyKind.TABULAR_NONUNIFORM:
        return p, SizeDistribution.model_validate(params["f_b"])
    if "d" in params:
        return p, SizeDistribution.constant(int(params["d"]))
    raise ValueError("simulate needs --d or --sizes for this policy kind")


def simulate_policy(config: ExperimentConfig) -> int:
    if config.policy is None:
        raise ValueError("simulate needs --policy")
    policy = load_policy(config.policy)
    p, sizes = _policy_inputs(config, policy)
    runs: list[SimStats] = []
    for k, seed in enumerate(config.seeds):
        cfg = SimConfig(
            horizon=config.horizon,
            seed=seed,
            p=p,
            sizes=sizes,
            record_trace=config.trace is not None and k == 0,
        )
        stats = simulate(policy, cfg)
        runs.append(stats)
        print(format_sim_result(stats, f"{policy.label} seed={seed}"))
        if config.trace is not None and stats.trace is not None:
            write_trace(stats.trace, config.trace)

    out = _out_dir(config)
    write_json(
        out / "stats.json",
        {
            "policy": policy.label,
            "p": p,
            "sizes": sizes.describe(),
            "mean_time_avg_aoi": float(np.mean([r.time_avg_aoi for r in runs])),
            "runs": [r.model_dump(mode="json") for r in runs],
        },
    )
    return EXIT_OK


def sweep_point(config: ExperimentConfig, p: float) -> tuple[SweepRow, bool]:
    """Solve and simulate the three policies at one arrival probability.

    All three policies share each seed's arrival and size streams.
    """
    start = time.perf_counter()
    point = config.model_copy(update={"p": p})
    value, table = _solve(point)
    sizes = _sizes(point)
    sim_opt, se_opt = _simulate_seeds(TabularPolicy(table), point, p, sizes)
    sim_skip, se_skip = _simulate_seeds(AlwaysSkip(), point, p, sizes)
    sim_switch, se_switch = _simulate_seeds(AlwaysSwitch(), point, p, sizes)
    logger.info(
        "sweep_point_completed",
        p=p,
        gain=value.gain,
        elapsed_ms=round((time.perf_counter() - start) * 1000),
    )
    row = SweepRow(
        p=p,
        j_opt=value.gain,
        sim_opt=sim_opt,
        sim_skip=sim_skip,
        sim_switch=sim_switch,
        gap_skip_minus_opt=sim_skip - sim_opt,
        se_opt=se_opt,
        se_skip=se_skip,
        se_switch=se_switch,
    )
    return row, value.converged


def run_sweep(config: ExperimentConfig) -> tuple[list[SweepRow], bool]:
    """Evaluate every grid point; rows come back in grid order."""
    if not config.p_grid:
        raise ValueError("sweep needs a non-empty p grid")
    settings = get_settings()
    worker = partial(sweep_point, config)
    if settings.workers == 1:
        results = [worker(p) for p in config.p_grid]
    else:
        init = partial(
            init_worker,
            experiment_context(config),
            json_format=settings.json_logs,
            debug=settings.debug,
        )
        with multiprocessing.Pool(settings.workers, initializer=init) as pool:
            results = list(pool.imap(worker, config.p_grid))
    return [row for row, _ in results], all(ok for _, ok in results)


def sweep(config: ExperimentConfig) -> int:
    rows, converged = run_sweep(config)
    out = _out_dir(config)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, (sweep_row_cells(r) for r in rows))
    print(f"wrote {len(rows)} sweep points to {out / 'sweep.csv'}")
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def figure(config: ExperimentConfig) -> int:
    if config.which is None:
        raise ValueError("figure needs --which")
    which = config.which
    defaults = {
        k: v for k, v in FIGURE_DEFAULTS[which].items() if getattr(config, k) is None
    }
    if "model" in FIGURE_DEFAULTS[which]:
        defaults["model"] = FIGURE_DEFAULTS[which]["model"]
    if "sizes" in defaults:
        defaults["sizes"] = SizeDistribution.parse(defaults["sizes"])
    if which in FIGURE_SWEEP_COLUMNS and not config.p_grid:
        defaults["p_grid"] = FIGURE_GRID
    config = config.model_copy(update=defaults)
    path = _out_dir(config) / f"{which}.csv"

    if which in FIGURE_SWEEP_COLUMNS:
        rows, converged = run_sweep(config)
        columns = FIGURE_SWEEP_COLUMNS[which]
        dumped = [r.model_dump(by_alias=True) for r in rows]
        write_csv(path, columns, ([float(d[c]) for c in columns] for d in dumped))
    else:
        value, table = _solve(config)
        converged = value.converged
        if which == "uniform-map":
            write_csv(path, UNIFORM_MAP_COLUMNS, uniform_policy_rows(table))
        elif which == "epoch-map":
            params = config.uniform_params()
            write_csv(path, EPOCH_MAP_COLUMNS, epoch_policy_rows(table, params))
        else:
            write_csv(path, NONUNIFORM_MAP_COLUMNS, nonuniform_policy_rows(table))
    print(f"wrote figure {which} data to {path}")
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


HANDLERS = {
    Mode.SOLVE_UNIFORM: solve_uniform,
    Mode.SOLVE_NONUNIFORM: solve_nonuniform,
    Mode.SIMULATE: simulate_policy,
    Mode.SWEEP: sweep,
    Mode.FIGURE: figure,
}


def run(config: ExperimentConfig) -> int:
    """Execute one experiment and map failures to exit codes."""
    if config.mode is Mode.SOLVE_UNIFORM:
        config = config.model_copy(update={"model": ModelKind.UNIFORM})
    elif config.mode is Mode.SOLVE_NONUNIFORM:
        config = config.model_copy(update={"model": ModelKind.NONUNIFORM})
    bind_experiment(config)
    try:
        return HANDLERS[config.mode](config)
    except ThresholdStructureError as e:
        logger.error("threshold_structure_violation", error=str(e))
        return EXIT_STRUCTURE
    except (
        PolicyMismatchError,
        InvalidThresholdsError,
        InvalidStateError,
        ValidationError,
        ValueError,
    ) as e:
        logger.error("experiment_config_invalid", mode=config.mode.value, error=str(e))
        return EXIT_CONFIG
    except OSError as e:
        logger.error("experiment_io_failed", mode=config.mode.value, error=str(e))
        return EXIT_IO


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
    except OSError as e:
        logger.error("config_unreadable", path=str(args.config), error=str(e))
        return EXIT_IO
    except (ValidationError, ValueError) as e:
        logger.error("config_invalid", error=str(e))
        return EXIT_CONFIG
    return run(config)
