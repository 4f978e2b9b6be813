"""
Finite-difference oracles for the analytic gradient and Hessian of the loss.

All checks work in the real parameterization (Re a, Im a, tau) of R^{3r}.
"""
import logging
from typing import Callable, NamedTuple, Optional, Tuple, Union

import numpy as np

from services.instances import InstanceSpec, gen_instance
from services.signal_model import (
    Observation,
    PsfWeights,
    SpikeParams,
    gradient,
    hessian_blocks,
    loss,
    observe,
    real_hessian,
)

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-6
# The loss is quadratic in (Re a, Im a), so centered differences along the
# amplitude coordinates carry no truncation error
AMPLITUDE_STEP = 1e-3
ABSOLUTE_FLOOR = 1e-8
# Entries below this fraction of their block's largest entry are compared absolutely
BLOCK_FLOOR_FRACTION = 1e-3

MAX_SPIKES = 8
PERTURBATION = 0.05

Step = Union[float, np.ndarray]


def finite_difference_gradient(
    func: Callable[[np.ndarray], float],
    x0: np.ndarray,
    eps: Step = DEFAULT_STEP,
) -> np.ndarray:
    """Centered-difference gradient of a scalar function; eps is a scalar or one step per coordinate."""
    x0 = np.asarray(x0, dtype=float)
    steps = np.broadcast_to(np.asarray(eps, dtype=float), x0.shape)
    grad = np.zeros(x0.size)
    for j in range(x0.size):
        x = np.copy(x0)
        x[j] = x0[j] + steps[j]
        fplus = func(x)
        x[j] = x0[j] - steps[j]
        fminus = func(x)
        grad[j] = (fplus - fminus) / (2 * steps[j])
    return grad


def finite_difference_jacobian(
    func: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    eps: Step = DEFAULT_STEP,
) -> np.ndarray:
    """Centered-difference Jacobian; column j is d func / d x_j."""
    x0 = np.asarray(x0, dtype=float)
    steps = np.broadcast_to(np.asarray(eps, dtype=float), x0.shape)
    columns = []
    for j in range(x0.size):
        x = np.copy(x0)
        x[j] = x0[j] + steps[j]
        fplus = np.asarray(func(x), dtype=float)
        x[j] = x0[j] - steps[j]
        fminus = np.asarray(func(x), dtype=float)
        columns.append((fplus - fminus) / (2 * steps[j]))
    return np.stack(columns, axis=1)


def relative_error(estimate: np.ndarray, exact: np.ndarray, floor: float = ABSOLUTE_FLOOR) -> float:
    """max_i |estimate_i - exact_i| / max(|exact_i|, floor)."""
    estimate = np.asarray(estimate)
    exact = np.asarray(exact)
    if exact.size == 0:
        return 0.0
    return float((np.abs(estimate - exact) / np.maximum(np.abs(exact), floor)).max())


def block_relative_error(estimate: np.ndarray, exact: np.ndarray) -> float:
    """relative_error with the floor raised to BLOCK_FLOOR_FRACTION of the block's largest entry."""
    exact = np.asarray(exact)
    if exact.size == 0:
        return 0.0
    floor = max(ABSOLUTE_FLOOR, BLOCK_FLOOR_FRACTION * float(np.abs(exact).max()))
    return relative_error(estimate, exact, floor)


def coordinate_steps(r: int, n: int, location_step: Optional[float] = None) -> np.ndarray:
    """AMPLITUDE_STEP for the 2r amplitude coordinates, DEFAULT_STEP / (n+1) for the r locations."""
    location_step = DEFAULT_STEP / (n + 1) if location_step is None else location_step
    return np.concatenate([np.full(2 * r, AMPLITUDE_STEP), np.full(r, location_step)])


class DerivativeCheck(NamedTuple):
    gradient_error: float
    hessian_error: float


def check_derivatives(
    params: SpikeParams,
    obs: Observation,
    location_step: Optional[float] = None,
) -> DerivativeCheck:
    """
    Compare analytic derivatives with finite differences at params.

    The gradient is checked against differences of the loss; the assembled
    Hessian against the finite-difference Jacobian of the analytic gradient.
    Errors are entrywise relative, floored per block (amplitude and location
    parts of the gradient, the four amplitude/location blocks of the Hessian).
    """
    x0 = params.to_real()
    steps = coordinate_steps(params.r, obs.n, location_step)
    amplitude = slice(0, 2 * params.r)
    location = slice(2 * params.r, 3 * params.r)

    def real_loss(x):
        return loss(SpikeParams.from_real(x), obs)

    def real_gradient(x):
        return gradient(SpikeParams.from_real(x), obs).to_real()

    fd_gradient = finite_difference_gradient(real_loss, x0, steps)
    exact_gradient = gradient(params, obs).to_real()
    grad_error = max(
        block_relative_error(fd_gradient[part], exact_gradient[part]) for part in (amplitude, location)
    )
    fd_hessian = finite_difference_jacobian(real_gradient, x0, steps)
    exact_hessian = real_hessian(hessian_blocks(params, obs))
    hess_error = max(
        block_relative_error(fd_hessian[rows, cols], exact_hessian[rows, cols])
        for rows in (amplitude, location)
        for cols in (amplitude, location)
    )
    logger.debug(f"Derivative check r={params.r} n={obs.n}: grad={grad_error:.3e} hess={hess_error:.3e}")
    return DerivativeCheck(gradient_error=grad_error, hessian_error=hess_error)


def draw_check_point(rng: np.random.Generator, kappa: float) -> Tuple[SpikeParams, Observation]:
    """Random instance with n in [8, 48] and a start perturbed away from the truth."""
    n = int(rng.integers(8, 49))
    r = int(rng.integers(1, min(MAX_SPIKES, (n + 1) // 2) + 1))
    truth = gen_instance(InstanceSpec(n=n, r=r, kappa=kappa, min_sep_scaled=1.0), rng)
    amplitudes = truth.amplitudes * (1 + PERTURBATION * (rng.uniform(-1, 1, r) + 1j * rng.uniform(-1, 1, r)))
    locations = truth.locations + PERTURBATION * rng.uniform(-1, 1, r) / (n + 1)
    return SpikeParams(amplitudes=amplitudes, locations=locations), observe(truth, PsfWeights.triangular(n))
