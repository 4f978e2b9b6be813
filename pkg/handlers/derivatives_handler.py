"""
Finite-difference check of the analytic gradient and Hessian on random instances.
"""
import logging
import os

from config.config import APP_VERSION, RunConfig
from handlers.commands import ExitCode, PREFIX_DERIVATIVES, RUN_CONVENTIONS
from services.derivative_check import check_derivatives, draw_check_point
from services.exceptions import NumericalError
from services.instances import make_rng
from utils.decorators import log_duration
from utils.io_utils import format_summary, output_name, output_stem, write_csv, write_run_record

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-6
HESSIAN_TOLERANCE = 1e-5

DERIVATIVE_HEADER = ['trial', 'n', 'r', 'gradient_error', 'hessian_error']


@log_duration
def handle_check_derivatives(config: RunConfig) -> ExitCode:
    """
    Raises:
        NumericalError: worst gradient or Hessian error exceeds its tolerance
    """
    rows = []
    for trial in range(config.trials):
        rng = make_rng([config.seed, trial])
        params, obs = draw_check_point(rng, config.kappa)
        check = check_derivatives(params, obs)
        rows.append([trial, obs.n, params.r, check.gradient_error, check.hessian_error])

    out_dir = config.output_dir
    write_csv(os.path.join(out_dir, output_name(PREFIX_DERIVATIVES, config.seed)), DERIVATIVE_HEADER, rows)
    worst_gradient = max(row[3] for row in rows)
    worst_hessian = max(row[4] for row in rows)
    write_run_record(out_dir, output_stem(PREFIX_DERIVATIVES, config.seed), config, APP_VERSION,
                     RUN_CONVENTIONS, {'max_gradient_error': worst_gradient, 'max_hessian_error': worst_hessian})
    print(format_summary(f"check-derivatives ({config.trials} instances)", {
        'max gradient error': worst_gradient,
        'max hessian error': worst_hessian,
    }))

    if worst_gradient >= GRADIENT_TOLERANCE or worst_hessian >= HESSIAN_TOLERANCE:
        raise NumericalError(
            f"Derivative mismatch: gradient {worst_gradient:.3e} (tol {GRADIENT_TOLERANCE:g}), "
            f"hessian {worst_hessian:.3e} (tol {HESSIAN_TOLERANCE:g})"
        )
    return ExitCode.SUCCESS
