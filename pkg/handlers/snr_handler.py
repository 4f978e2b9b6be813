"""
Noisy recovery against SNR with the Cramer-Rao benchmark.
"""
import logging
import math
import os

from config.config import APP_VERSION, RunConfig
from handlers.commands import ExitCode, PREFIX_CRB, PREFIX_SNR, RUN_CONVENTIONS
from services.experiments import CRB_TABLE_HEADER, SNR_HEADER, fit_loglog_slope, snr_experiment
from services.instances import db_to_linear
from utils.decorators import log_duration
from utils.io_utils import format_summary, output_name, output_stem, write_csv, write_run_record
from utils.plotting import plot_snr

logger = logging.getLogger(__name__)

# SNR from which the error is expected to follow the local Gaussian scaling
HIGH_SNR_DB = 30.0


@log_duration
def handle_snr(config: RunConfig) -> ExitCode:
    result = snr_experiment(
        config.instance_spec(),
        config.snr_db,
        config.trials,
        iterations=config.iterations,
        a_policy=config.a_policy,
        workers=config.workers,
    )
    out_dir = config.output_dir
    write_csv(
        os.path.join(out_dir, output_name(PREFIX_SNR, config.seed, kappa=config.kappa)),
        SNR_HEADER, [row.csv_row() for row in result.rows],
    )
    write_csv(
        os.path.join(out_dir, output_name(PREFIX_CRB, config.seed, kappa=config.kappa)),
        CRB_TABLE_HEADER, result.crb_table,
    )

    stem = output_stem(PREFIX_SNR, config.seed, kappa=config.kappa)
    if config.plot:
        plot_snr(result.rows, os.path.join(out_dir, f"{stem}.svg"))

    high = [row for row in result.rows if HIGH_SNR_DB <= row.snr_db < math.inf]
    slopes = {
        'invariant': fit_loglog_slope([db_to_linear(row.snr_db) for row in high],
                                      [row.mean_error_invariant for row in high]),
        'adaptive': fit_loglog_slope([db_to_linear(row.snr_db) for row in high],
                                     [row.mean_error_adaptive for row in high]),
    }
    write_run_record(out_dir, stem, config, APP_VERSION, RUN_CONVENTIONS,
                     {'high_snr_loglog_slopes': {k: _json_float(v) for k, v in slopes.items()}})

    summary = {f"{scheme} high-SNR log-log slope": slope for scheme, slope in slopes.items()}
    for row in result.rows:
        summary[f"{row.snr_db:g} dB error/CRB (adaptive)"] = (
            row.mean_error_adaptive / row.crb_weighted if row.crb_weighted > 0 else math.nan
        )
        if row.failures_invariant or row.failures_adaptive:
            logger.warning(
                f"{row.snr_db:g} dB: {row.failures_invariant} invariant and "
                f"{row.failures_adaptive} adaptive runs failed"
            )
    print(format_summary(f"snr (kappa={config.kappa:g}, {config.trials} trials per point)", summary))
    return ExitCode.SUCCESS


def _json_float(value: float):
    return value if math.isfinite(value) else None
