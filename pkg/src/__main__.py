"""Entry point: ``python -m src <subcommand> ...``."""

import sys
from pathlib import Path

# Modules import each other by bare name, as under pytest's pythonpath.
sys.path.insert(0, str(Path(__file__).resolve().parent))

from cli import main  # noqa: E402
from config import get_settings  # noqa: E402
from log_config import configure_logging  # noqa: E402


def run() -> int:
    """Configure logging from the environment and run the CLI."""
    settings = get_settings()
    configure_logging(json_format=settings.json_logs, debug=settings.debug)
    return main()


if __name__ == "__main__":
    sys.exit(run())
