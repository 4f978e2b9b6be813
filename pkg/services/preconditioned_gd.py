"""
Preconditioned gradient descent theta_{k+1} = theta_k - P_k grad L(theta_k)
with the invariant and the adaptive diagonal preconditioners, the weighted
error metric ||S (theta - theta*)||_inf and the theoretical rate constants.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from services.exceptions import DegenerateIterateError, DomainError, NumericalError, SpikeGDError
from services.signal_model import (
    Observation,
    SpikeParams,
    gradient,
    loss,
    weight_vector,
    wraparound_separation,
    wrapped_difference,
)
from services.fejer_kernel import second_derivative_at_zero

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 200
DEFAULT_TOLERANCE = 1e-12

# Constants of the two linear-convergence guarantees
ETA_CONSTANT = 276.21
GAMMA_CONSTANT = 11.60
FIXED_BASIN_RADIUS = 0.5
ADAPTIVE_BASIN_RADIUS = 1.0 - math.sqrt(2.0 / 3.0)


class PreconditionerKind(str, Enum):
    INVARIANT = 'invariant'
    ADAPTIVE = 'adaptive'


@dataclass(frozen=True)
class Preconditioner:
    """Diagonal of P: r ones for the amplitudes, r location step sizes."""
    kind: PreconditionerKind
    diag: np.ndarray
    a_scale: Optional[float] = None

    @property
    def r(self) -> int:
        return self.diag.size // 2

    @property
    def amplitude_steps(self) -> np.ndarray:
        return self.diag[:self.r]

    @property
    def location_steps(self) -> np.ndarray:
        return self.diag[self.r:]


def build_preconditioner(
    kind: PreconditionerKind,
    current_amplitudes: np.ndarray,
    n: int,
    a_scale: Optional[float] = None,
    iteration: int = -1,
) -> Preconditioner:
    """
    Build the invariant (fixed A) or the adaptive (current |a_k|) preconditioner.

    Raises:
        DomainError: invariant kind without a positive A
        DegenerateIterateError: adaptive kind with a zero current amplitude
    """
    kind = PreconditionerKind(kind)
    amplitudes = np.atleast_1d(np.asarray(current_amplitudes, dtype=complex))
    r = amplitudes.size
    curvature = -second_derivative_at_zero(n)

    if kind is PreconditionerKind.INVARIANT:
        if a_scale is None or not a_scale > 0:
            raise DomainError(f"Invariant preconditioner needs A > 0, got {a_scale}")
        location_steps = np.full(r, 1.0 / (curvature * a_scale ** 2))
    else:
        moduli = np.abs(amplitudes)
        if np.any(moduli == 0):
            raise DegenerateIterateError(
                f"Adaptive preconditioner undefined: zero amplitude at index {int(np.argmin(moduli))}",
                iteration=iteration,
            )
        location_steps = 1.0 / (curvature * moduli ** 2)
        if not np.all(np.isfinite(location_steps)):
            raise DegenerateIterateError("Adaptive preconditioner overflowed", iteration=iteration)

    return Preconditioner(
        kind=kind,
        diag=np.concatenate([np.ones(r), location_steps]),
        a_scale=a_scale,
    )


@dataclass(frozen=True)
class WeightMatrix:
    """S = diag([1/a*; sqrt(-F''(0)) 1_r])."""
    inv_truth_amplitudes: np.ndarray
    location_scale: float

    @classmethod
    def from_truth(cls, truth: SpikeParams, n: int) -> 'WeightMatrix':
        s = weight_vector(truth, n)
        return cls(inv_truth_amplitudes=s[:truth.r], location_scale=float(s[-1].real))

    def weighted_error(self, params: SpikeParams, truth: SpikeParams) -> float:
        amplitude_error = np.abs((params.amplitudes - truth.amplitudes) * self.inv_truth_amplitudes)
        location_error = self.location_scale * np.abs(wrapped_difference(params.locations, truth.locations))
        return float(max(amplitude_error.max(), location_error.max()))


def weighted_error(params: SpikeParams, truth: SpikeParams, n: int) -> float:
    """||S (theta - theta*)||_inf, locations compared on the torus."""
    return WeightMatrix.from_truth(truth, n).weighted_error(params, truth)


def gd_step(params: SpikeParams, obs: Observation, precond: Preconditioner) -> SpikeParams:
    grad = gradient(params, obs)
    if np.iscomplexobj(grad.locations):
        raise NumericalError("Location gradient must be real")
    return SpikeParams(
        amplitudes=params.amplitudes - precond.amplitude_steps * grad.amplitudes,
        locations=params.locations - precond.location_steps * grad.locations,
    )


@dataclass
class IterationRecord:
    iteration: int
    weighted_error: float
    loss: float
    contraction_ratio: float


@dataclass
class RunTrace:
    """Per-iteration history of one GD run."""
    kind: PreconditionerKind
    records: List[IterationRecord] = field(default_factory=list)
    final_params: Optional[SpikeParams] = None
    iterations_run: int = 0
    converged: bool = False
    failed: bool = False
    failure_reason: str = ''

    @property
    def weighted_errors(self) -> np.ndarray:
        return np.array([rec.weighted_error for rec in self.records])

    @property
    def contraction_ratios(self) -> np.ndarray:
        return np.array([rec.contraction_ratio for rec in self.records[1:]])

    def csv_rows(self) -> List[list]:
        return [
            [rec.iteration, rec.weighted_error, rec.loss, rec.contraction_ratio]
            for rec in self.records
        ]


CSV_HEADER = ['iteration', 'weighted_error', 'loss', 'contraction_ratio']


def run(
    params0: SpikeParams,
    obs: Observation,
    kind: PreconditionerKind,
    truth: Optional[SpikeParams] = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOLERANCE,
    a_scale: Optional[float] = None,
) -> RunTrace:
    """
    Iterate preconditioned GD.

    Stops when the weighted error (truth given) or the gradient max-norm
    (truth omitted) drops to tol, or after max_iters iterations. Weighted
    errors are NaN when no truth is available.

    Args:
        params0: Initial iterate
        obs: Observation
        kind: Preconditioner design
        truth: Ground truth for weighted-error tracking, optional
        max_iters: Iteration cap
        tol: Stopping tolerance
        a_scale: A for the invariant preconditioner

    Returns:
        RunTrace; degenerate adaptive iterates mark the trace failed
    """
    kind = PreconditionerKind(kind)
    if max_iters < 1:
        raise DomainError(f"max_iters must be >= 1, got {max_iters}")
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if truth is not None and truth.r != params0.r:
        raise DomainError(f"Initial iterate has {params0.r} spikes, truth has {truth.r}")

    metric = WeightMatrix.from_truth(truth, obs.n) if truth is not None else None
    trace = RunTrace(kind=kind)
    params = params0
    precond = None
    if kind is PreconditionerKind.INVARIANT:
        precond = build_preconditioner(kind, params.amplitudes, obs.n, a_scale)

    previous_error = math.nan
    for iteration in range(max_iters + 1):
        current_loss = loss(params, obs)
        error = metric.weighted_error(params, truth) if metric is not None else math.nan
        ratio = error / previous_error if previous_error > 0 else math.nan
        trace.records.append(IterationRecord(iteration, error, current_loss, ratio))
        trace.final_params = params
        trace.iterations_run = iteration
        logger.debug(f"[{kind.value}] it={iteration} err={error:.3e} loss={current_loss:.3e}")

        if not math.isfinite(current_loss):
            trace.failed = True
            trace.failure_reason = f"non-finite loss at iteration {iteration}"
            logger.warning(f"Run diverged: {trace.failure_reason}")
            break
        if metric is not None:
            stop = error <= tol
        else:
            stop = gradient(params, obs).max_norm() <= tol
        if stop:
            trace.converged = True
            break
        if iteration == max_iters:
            break

        if kind is PreconditionerKind.ADAPTIVE:
            try:
                precond = build_preconditioner(kind, params.amplitudes, obs.n, iteration=iteration)
            except DegenerateIterateError as e:
                trace.failed = True
                trace.failure_reason = str(e)
                logger.warning(f"Run aborted at iteration {iteration}: {e}")
                break
        try:
            params = gd_step(params, obs, precond)
        except (SpikeGDError, FloatingPointError) as e:
            trace.failed = True
            trace.failure_reason = f"step failed at iteration {iteration}: {e}"
            logger.warning(f"Run aborted: {trace.failure_reason}")
            break
        previous_error = error

    logger.info(
        f"[{kind.value}] finished after {trace.iterations_run} iterations, "
        f"converged={trace.converged}, failed={trace.failed}"
    )
    return trace


@dataclass(frozen=True)
class RateConstants:
    eta: Optional[float]
    gamma: float
    predicted_rate_fixed: Optional[float]
    predicted_rate_adaptive: float
    rate_floor_fixed: Optional[float]
    fixed_hypotheses_hold: bool
    adaptive_hypotheses_hold: bool


def rate_constants(truth: SpikeParams, n: int, a_scale: Optional[float] = None) -> RateConstants:
    """
    eta, gamma and the predicted contraction rates of both schemes.

    Rates are reported even outside the guarantees; the *_hypotheses_hold
    flags say whether the guarantees apply.
    """
    if truth.r < 2:
        raise DomainError("Rate constants need at least two spikes (separation undefined)")
    moduli = np.abs(truth.amplitudes)
    a_max, a_min = float(moduli.max()), float(moduli.min())
    if a_min == 0:
        raise DomainError("Rate constants need nonzero true amplitudes")
    spread = wraparound_separation(truth.locations).scaled(n) ** -2

    gamma = GAMMA_CONSTANT * a_max / a_min * spread
    eta = predicted_fixed = floor_fixed = None
    fixed_ok = False
    if a_scale is not None:
        eta = ETA_CONSTANT * a_scale ** 2 * a_max / a_min ** 3 * spread
        predicted_fixed = 1.0 - 0.25 * (a_min / a_scale) ** 2 * (1.0 - eta)
        floor_fixed = 1.0 - 0.25 * (a_min / a_scale) ** 2
        fixed_ok = eta < 1.0 and a_max <= 1.5 * a_scale
    return RateConstants(
        eta=eta,
        gamma=gamma,
        predicted_rate_fixed=predicted_fixed,
        predicted_rate_adaptive=0.5 + gamma,
        rate_floor_fixed=floor_fixed,
        fixed_hypotheses_hold=fixed_ok,
        adaptive_hypotheses_hold=gamma < 0.5,
    )


def default_a_scale(truth: SpikeParams) -> float:
    """A = (3/2) ||a*||_inf, the experiment setting."""
    return 1.5 * float(np.abs(truth.amplitudes).max())
