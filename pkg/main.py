"""
Main entry point for spikegd.

This module configures logging, resolves the run configuration and
dispatches to the command handler.
"""
import logging
import sys
from typing import Optional, Sequence

from config.config import ConfigError, configure_logging, load_config, parse_config
from handlers.basin_handler import handle_basin
from handlers.bounds_handler import handle_verify_bounds
from handlers.commands import Command, ExitCode
from handlers.derivatives_handler import handle_check_derivatives
from handlers.dynamic_range_handler import handle_dynamic_range
from handlers.snr_handler import handle_snr
from handlers.solve_handler import handle_solve
from services.exceptions import (
    DegenerateIterateError,
    DomainError,
    InfeasibleInstanceError,
    NumericalError,
)

logger = logging.getLogger(__name__)

HANDLERS = {
    Command.SOLVE: handle_solve,
    Command.BASIN: handle_basin,
    Command.DYNAMIC_RANGE: handle_dynamic_range,
    Command.SNR: handle_snr,
    Command.VERIFY_BOUNDS: handle_verify_bounds,
    Command.CHECK_DERIVATIVES: handle_check_derivatives,
}


def error_handler(error: Exception) -> ExitCode:
    """Log a failed run and map the error to its exit code."""
    if isinstance(error, (ConfigError, DomainError)):
        logger.error(f"Invalid configuration: {error}")
        return ExitCode.USAGE_ERROR
    if isinstance(error, InfeasibleInstanceError):
        logger.error(f"Infeasible instance: {error}")
        return ExitCode.INFEASIBLE
    if isinstance(error, DegenerateIterateError):
        logger.error(f"Degenerate iterate at iteration {error.iteration}: {error}")
        return ExitCode.NUMERICAL_FAILURE
    if isinstance(error, NumericalError):
        logger.error(f"Numerical failure: {error}")
        return ExitCode.NUMERICAL_FAILURE
    raise error


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    settings = load_config()
    configure_logging()

    try:
        config = parse_config(argv)
        logger.info(f"Starting {settings['app_name']} {settings['version']}: {config.command}")
        return int(HANDLERS[Command(config.command)](config))
    except (ConfigError, DomainError, InfeasibleInstanceError, DegenerateIterateError, NumericalError) as e:
        return int(error_handler(e))


if __name__ == '__main__':
    sys.exit(main())
