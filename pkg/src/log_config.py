"""structlog setup for the solvers, the simulator and the experiment driver.

Every event carries the experiment context bound by :func:`bind_experiment`
(mode, model and seeds), including events emitted inside sweep workers.
"""

import logging
import os
import sys
from collections.abc import MutableMapping
from typing import Any

import numpy as np
import structlog

from models.params import ExperimentConfig


def numpy_scalars_to_python(
    _logger: Any, _method: str, event_dict: MutableMapping[str, Any]
) -> MutableMapping[str, Any]:
    """Unwrap numpy scalars so the JSON renderer can serialise solver output."""
    for key, value in event_dict.items():
        if isinstance(value, np.generic):
            event_dict[key] = value.item()
    return event_dict


def configure_logging(*, json_format: bool = False, debug: bool = False) -> None:
    """Route structlog and stdlib logging to a single stderr handler.

    Args:
        json_format: Render one JSON object per event, for batch sweeps whose
            logs are collected. Otherwise render coloured console lines.
        debug: Emit DEBUG events (per-run simulator and oracle diagnostics).
    """
    shared_processors: list[structlog.typing.Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso"),
        numpy_scalars_to_python,
    ]

    if json_format:
        shared_processors.append(structlog.processors.format_exc_info)
        renderer: structlog.typing.Processor = structlog.processors.JSONRenderer()
    else:
        renderer = structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())

    structlog.configure(
        processors=[
            *shared_processors,
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    formatter = structlog.stdlib.ProcessorFormatter(
        foreign_pre_chain=shared_processors,
        processors=[
            structlog.stdlib.ProcessorFormatter.remove_processors_meta,
            renderer,
        ],
    )

    # stdout carries command output such as written paths and tables
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    root_logger.handlers.clear()
    root_logger.addHandler(handler)
    root_logger.setLevel(logging.DEBUG if debug else logging.INFO)


def experiment_context(config: ExperimentConfig) -> dict[str, Any]:
    """Fields attached to every event of one experiment run."""
    return {
        "mode": config.mode.value,
        "model": config.model.value,
        "seeds": list(config.seeds),
    }


def bind_experiment(config: ExperimentConfig) -> None:
    """Replace the bound context with that of ``config``."""
    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(**experiment_context(config))


def init_worker(
    context: dict[str, Any], *, json_format: bool = False, debug: bool = False
) -> None:
    """Pool initializer: configure logging and carry the parent's context over."""
    configure_logging(json_format=json_format, debug=debug)
    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(**context, worker=os.getpid())


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    logger: structlog.stdlib.BoundLogger = structlog.get_logger(name)
    return logger
