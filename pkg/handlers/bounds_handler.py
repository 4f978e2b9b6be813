"""
Certification sweep of the kernel, Gramian, residual and Hessian bounds.
"""
import logging
import os

from config.config import APP_VERSION, RunConfig
from handlers.commands import ExitCode, PREFIX_BOUNDS, RUN_CONVENTIONS
from services.certification import REPORT_HEADER, verify_bounds
from utils.decorators import log_duration
from utils.io_utils import format_summary, output_name, output_stem, write_csv, write_run_record

logger = logging.getLogger(__name__)

# Summation-bound configurations per Hessian-regime trial
SUMMATION_FACTOR = 5


@log_duration
def handle_verify_bounds(config: RunConfig) -> ExitCode:
    """
    Run the certification sweep; violations are reported, not raised.

    Returns:
        SUCCESS with zero violations, NUMERICAL_FAILURE otherwise
    """
    report = verify_bounds(
        trials=config.trials,
        summation_trials=SUMMATION_FACTOR * config.trials,
        seed=config.seed,
    )
    out_dir = config.output_dir
    write_csv(
        os.path.join(out_dir, output_name(PREFIX_BOUNDS, config.seed)),
        REPORT_HEADER, [check.csv_row() for check in report.checks],
    )
    write_run_record(out_dir, output_stem(PREFIX_BOUNDS, config.seed), config, APP_VERSION,
                     RUN_CONVENTIONS, {'violations': report.violations})

    summary = {check.name: f"{check.violations}/{check.checked} violated" for check in report.checks}
    summary['total violations'] = report.violations
    print(format_summary('verify-bounds', summary))
    if report.violations:
        logger.error(f"{report.violations} bound violations found")
        return ExitCode.NUMERICAL_FAILURE
    return ExitCode.SUCCESS
