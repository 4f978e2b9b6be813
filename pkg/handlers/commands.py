"""
Commands, schemes and exit codes for spikegd.
"""
from enum import Enum, IntEnum


class Command(str, Enum):
    """Commands accepted on the command line."""
    SOLVE = 'solve'
    BASIN = 'basin'
    DYNAMIC_RANGE = 'dynamic-range'
    SNR = 'snr'
    VERIFY_BOUNDS = 'verify-bounds'
    CHECK_DERIVATIVES = 'check-derivatives'


class Scheme(str, Enum):
    INVARIANT = 'invariant'
    ADAPTIVE = 'adaptive'
    BOTH = 'both'


class ExitCode(IntEnum):
    SUCCESS = 0
    USAGE_ERROR = 1
    NUMERICAL_FAILURE = 2
    INFEASIBLE = 3


class Profile(str, Enum):
    FULL = 'full'
    SMOKE = 'smoke'


# Trial counts when the run configuration does not set one
DEFAULT_TRIALS = {
    Profile.FULL: {
        Command.SOLVE: 1,
        Command.BASIN: 1000,
        Command.DYNAMIC_RANGE: 1,
        Command.SNR: 1000,
        Command.VERIFY_BOUNDS: 200,
        Command.CHECK_DERIVATIVES: 100,
    },
    Profile.SMOKE: {
        Command.SOLVE: 1,
        Command.BASIN: 50,
        Command.DYNAMIC_RANGE: 1,
        Command.SNR: 50,
        Command.VERIFY_BOUNDS: 50,
        Command.CHECK_DERIVATIVES: 20,
    },
}

# Dynamic range when the run configuration does not set one
DEFAULT_KAPPA = {Command.SNR: 3.0}
FALLBACK_KAPPA = 1.0

# Iteration cap when the run configuration does not set one; the invariant
# scheme needs about 1000 iterations to reach 1e-6 at kappa = 6
DEFAULT_ITERATIONS = {Command.DYNAMIC_RANGE: 2000}
FALLBACK_ITERATIONS = 200

# Output file prefixes
PREFIX_SOLVE = 'solve'
PREFIX_BASIN = 'basin'
PREFIX_CURVES = 'dynamic_range_curves'
PREFIX_SLOPES = 'dynamic_range_slopes'
PREFIX_SNR = 'snr'
PREFIX_CRB = 'snr_crb_table'
PREFIX_BOUNDS = 'verify_bounds'
PREFIX_DERIVATIVES = 'check_derivatives'

# Recorded in every metadata file
RUN_CONVENTIONS = {
    'sampling': 'x_k = g_k sum_l a_l exp(-i 2 pi k tau_l), k = -n..n, tau on [-1/2, 1/2)',
    'crb_scalarization': 'max_j of sqrt(CRB_Re a_j + CRB_Im a_j)/|a*_j| and sqrt(-F_N\'\'(0) CRB_tau_j)',
    'equidistant_start': '3r S-weighted coordinates uniform in [-1, 1], rescaled to infinity norm d',
    'basin_phase': 'amplitude perturbations are complex; phases are perturbed',
    'success_rule': '||S(theta_final - theta*)||_inf <= 1e-2',
    'spike_matching': 'Hungarian assignment on wrap-around location distance',
}
