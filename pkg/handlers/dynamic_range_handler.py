"""
Convergence from the spectral initialization as the dynamic range grows.
"""
import logging
import os

from config.config import APP_VERSION, RunConfig
from handlers.commands import ExitCode, PREFIX_CURVES, PREFIX_SLOPES, RUN_CONVENTIONS
from services.experiments import CURVE_HEADER, SLOPE_HEADER, convergence_experiment, kappa_specs
from utils.decorators import log_duration
from utils.io_utils import format_summary, output_name, output_stem, write_csv, write_run_record
from utils.plotting import plot_convergence

logger = logging.getLogger(__name__)


@log_duration
def handle_dynamic_range(config: RunConfig) -> ExitCode:
    specs = kappa_specs(config.instance_spec(), config.kappas)
    results = convergence_experiment(
        specs,
        config.scheme,
        iterations=config.iterations,
        tol=config.tolerance,
        a_policy=config.a_policy,
        workers=config.workers,
    )
    out_dir = config.output_dir
    write_csv(
        os.path.join(out_dir, output_name(PREFIX_CURVES, config.seed, scheme=config.scheme)),
        CURVE_HEADER, [row for result in results for row in result.curve_rows()],
    )
    write_csv(
        os.path.join(out_dir, output_name(PREFIX_SLOPES, config.seed, scheme=config.scheme)),
        SLOPE_HEADER, [result.slope_row() for result in results],
    )

    stem = output_stem(PREFIX_CURVES, config.seed, scheme=config.scheme)
    if config.plot:
        plot_convergence(results, os.path.join(out_dir, f"{stem}.svg"))
    write_run_record(out_dir, stem, config, APP_VERSION, RUN_CONVENTIONS)

    summary = {}
    for result in results:
        summary[f"{result.scheme} kappa={result.kappa:g} slope"] = result.slope
        summary[f"{result.scheme} kappa={result.kappa:g} iterations to 1e-6"] = result.iterations_to_target
        if result.failed:
            logger.warning(f"Degenerate run with the {result.scheme} preconditioner at kappa={result.kappa:g}")
    print(format_summary('dynamic-range', summary))
    return ExitCode.SUCCESS
