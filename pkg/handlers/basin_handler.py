"""
Basin-of-attraction sweep over initialization distance and dynamic range.
"""
import logging
import os

from config.config import APP_VERSION, RunConfig
from handlers.commands import ExitCode, PREFIX_BASIN, RUN_CONVENTIONS
from services.experiments import BASIN_HEADER, basin_experiment
from utils.decorators import log_duration
from utils.io_utils import format_summary, output_name, output_stem, write_csv, write_run_record
from utils.plotting import plot_basin

logger = logging.getLogger(__name__)


def half_success_distance(rows) -> float:
    """First distance whose success rate drops below 1/2 (inf when none does)."""
    for row in sorted(rows, key=lambda row: row.distance):
        if row.success_rate < 0.5:
            return row.distance
    return float('inf')


@log_duration
def handle_basin(config: RunConfig) -> ExitCode:
    out_dir = config.output_dir
    all_rows = []
    summary = {}
    for kappa in config.kappas:
        rows = basin_experiment(
            config.instance_spec(kappa),
            config.scheme,
            config.distances,
            config.trials,
            iterations=config.iterations,
            a_policy=config.a_policy,
            workers=config.workers,
        )
        write_csv(
            os.path.join(out_dir, output_name(PREFIX_BASIN, config.seed, scheme=config.scheme, kappa=kappa)),
            BASIN_HEADER, [row.csv_row() for row in rows],
        )
        for scheme in sorted({row.scheme for row in rows}):
            scheme_rows = [row for row in rows if row.scheme == scheme]
            summary[f"{scheme} kappa={kappa:g} 50% distance"] = half_success_distance(scheme_rows)
            failures = sum(row.failures for row in scheme_rows)
            if failures:
                logger.warning(f"{failures} degenerate runs with the {scheme} preconditioner at kappa={kappa:g}")
        all_rows.extend(rows)

    stem = output_stem(PREFIX_BASIN, config.seed, scheme=config.scheme)
    if config.plot:
        plot_basin(all_rows, os.path.join(out_dir, f"{stem}.svg"))
    write_run_record(out_dir, stem, config, APP_VERSION, RUN_CONVENTIONS,
                     {'trials_per_point': config.trials, 'success_threshold': 1e-2})
    print(format_summary(f"basin ({config.trials} trials per point)", summary))
    return ExitCode.SUCCESS
