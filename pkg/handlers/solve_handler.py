"""
Single-instance recovery: spectral initialization followed by preconditioned GD.
"""
import logging
import os
from dataclasses import asdict

from config.config import APP_VERSION, RunConfig
from handlers.commands import ExitCode, PREFIX_SOLVE, RUN_CONVENTIONS
from services.experiments import resolve_schemes
from services.instances import NoiseSpec, add_noise, db_to_linear, gen_instance, make_rng
from services.preconditioned_gd import CSV_HEADER, default_a_scale, rate_constants, run
from services.signal_model import PsfWeights, observe
from services.spectral_init import align_to_truth, omp_init
from utils.decorators import log_duration
from utils.io_utils import (
    format_summary,
    load_instance,
    output_name,
    output_stem,
    save_instance,
    write_csv,
    write_run_record,
)

logger = logging.getLogger(__name__)


@log_duration
def handle_solve(config: RunConfig) -> ExitCode:
    """
    Recover one instance with every requested scheme.

    Args:
        config: Resolved run configuration

    Returns:
        SUCCESS, or NUMERICAL_FAILURE when any run hits a degenerate iterate
    """
    if config.instance_file:
        truth, n, seed = load_instance(config.instance_file)
        logger.info(f"Loaded instance with {truth.r} spikes (n={n}) from {config.instance_file}")
    else:
        n, seed = config.n, config.seed
        truth = gen_instance(config.instance_spec(), make_rng(seed))

    psf = PsfWeights.triangular(n)
    obs = add_noise(observe(truth, psf), NoiseSpec(snr=db_to_linear(config.noise_db)), make_rng([seed, 1]))
    start = align_to_truth(omp_init(obs, truth.r).params0, truth)
    a_scale = config.a_policy if config.a_policy is not None else default_a_scale(truth)

    out_dir = config.output_dir
    save_instance(os.path.join(out_dir, output_name(PREFIX_SOLVE, seed, kappa=config.kappa, ext='instance')),
                  truth, n, seed)

    summary = {}
    failed = False
    for kind in resolve_schemes(config.scheme):
        trace = run(
            start, obs, kind, truth=truth, max_iters=config.iterations,
            tol=config.tolerance, a_scale=a_scale,
        )
        write_csv(
            os.path.join(out_dir, output_name(PREFIX_SOLVE, seed, scheme=kind.value, kappa=config.kappa)),
            CSV_HEADER, trace.csv_rows(),
        )
        summary[f"{kind.value} final error"] = trace.records[-1].weighted_error
        summary[f"{kind.value} iterations"] = trace.iterations_run
        if trace.failed:
            failed = True
            summary[f"{kind.value} failure"] = trace.failure_reason
            logger.error(f"Run with the {kind.value} preconditioner failed: {trace.failure_reason}")

    extra = {'n': n, 'instance_seed': seed, 'a_scale': a_scale}
    if truth.r >= 2:
        rates = rate_constants(truth, n, a_scale)
        extra['rate_constants'] = asdict(rates)
        summary['predicted adaptive rate'] = rates.predicted_rate_adaptive
        summary['predicted invariant rate'] = rates.predicted_rate_fixed
    write_run_record(out_dir, output_stem(PREFIX_SOLVE, seed, kappa=config.kappa),
                     config, APP_VERSION, RUN_CONVENTIONS, extra)

    print(format_summary(f"solve (n={n}, r={truth.r}, seed={seed})", summary))
    return ExitCode.NUMERICAL_FAILURE if failed else ExitCode.SUCCESS
