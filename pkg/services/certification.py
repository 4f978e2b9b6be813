"""
Numerical certification of the kernel summation bounds, the Gramian and
residual-derivative bounds built on them, and the two uniform bounds on the
scaled Hessian deviation ||S P H(theta) S^{-1} - I||_inf.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from services.exceptions import DomainError
from services.experiments import draw_equidistant_start
from services.fejer_kernel import (
    BoundConstants,
    BoundParams,
    bound_constants,
    certified_bound_constants,
    check_summation_bound,
    fejer_eval,
)
from services.instances import InstanceSpec, gen_instance, make_rng
from services.preconditioned_gd import (
    ADAPTIVE_BASIN_RADIUS,
    ETA_CONSTANT,
    FIXED_BASIN_RADIUS,
    GAMMA_CONSTANT,
    PreconditionerKind,
    build_preconditioner,
    default_a_scale,
    rate_constants,
    run,
    weighted_error,
)
from services.signal_model import (
    Observation,
    PsfWeights,
    SpikeParams,
    gramian_blocks,
    hessian_blocks,
    infinity_norm,
    observe,
    scaled_hessian_deviation,
    wraparound_separation,
    wrapped_difference,
)

logger = logging.getLogger(__name__)

# 27 / (16 pi^2) bounds (n+1)^2 / (-F''(0)) for n >= 2
CURVATURE_RATIO = 27.0 / (16.0 * math.pi ** 2)
GRAMIAN_WEIGHT = 3.0 * math.sqrt(3.0) / (4.0 * math.pi)


class RegimeConstants(NamedTuple):
    min_separation: float
    k_delta: float
    k_theta: float


FIXED_REGIME = RegimeConstants(min_separation=16.5, k_delta=2.13, k_theta=44.42)
ADAPTIVE_REGIME = RegimeConstants(min_separation=4.7, k_delta=2.32, k_theta=75.80)

# Published ceilings for the computed constants
PUBLISHED_SUMMATION_CONSTANTS = {
    (16.5, 4.125): (2.75, 19.08, 48.74),
    (4.7, 1.175): (3.24, 22.90, 105.55),
}
PUBLISHED_HESSIAN_CONSTANTS = {
    16.5: {'k_delta': 2.13, 'k_a': 4.40, 'k_tau': 6.71, 'k_theta_fixed': 44.42},
    4.7: {'k_delta': 2.32, 'k_a': 5.26, 'k_tau': 11.38, 'k_theta_adaptive': 75.80},
}

ZERO_RESIDUAL_TOLERANCE = 1e-12


@dataclass(frozen=True)
class HessianConstants:
    k_delta: float
    k_a: float
    k_tau: float
    k_theta_fixed: float
    k_theta_adaptive: float


def hessian_constants(alpha: float, beta: Optional[float] = None) -> HessianConstants:
    """
    K_Delta from C(alpha, 0); K_a and K_tau from C(alpha, beta) with beta = alpha/4 by default.
    """
    beta = alpha / 4.0 if beta is None else beta
    sep = bound_constants(BoundParams(alpha=alpha, beta=0.0))
    near = bound_constants(BoundParams(alpha=alpha, beta=beta))
    k_delta = max(
        sep.c0 + GRAMIAN_WEIGHT * sep.c1,
        GRAMIAN_WEIGHT * sep.c1 + CURVATURE_RATIO * sep.c2,
    )
    k_a = near.c1 * math.sqrt(CURVATURE_RATIO) + near.c2 * CURVATURE_RATIO
    k_tau = near.c2 * CURVATURE_RATIO + near.c3 * CURVATURE_RATIO ** 1.5
    return HessianConstants(
        k_delta=k_delta,
        k_a=k_a,
        k_tau=k_tau,
        k_theta_fixed=4.0 * (k_a + k_tau),
        k_theta_adaptive=4.0 * (k_delta + k_a + k_tau),
    )


class BoundCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def check_gramian_bound(tau: np.ndarray, n: int) -> BoundCheck:
    """||D(tau) - I||_inf against K_Delta ((n+1) Delta)^{-2} at the tight alpha."""
    tau = np.asarray(tau, dtype=float)
    alpha = wraparound_separation(tau).scaled(n)
    d0, d1, d2 = gramian_blocks(tau, n)
    d_matrix = np.block([[d0, d1], [d1.T, d2]])
    lhs = infinity_norm(d_matrix - np.eye(2 * tau.size))
    rhs = hessian_constants(alpha).k_delta * alpha ** -2
    return BoundCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs)


class ResidualDerivativeCheck(NamedTuple):
    first: BoundCheck
    second: BoundCheck
    self_first: float
    self_second: float

    @property
    def holds(self) -> bool:
        return self.first.holds and self.second.holds


def check_residual_derivative_bound(params: SpikeParams, truth: SpikeParams, n: int) -> ResidualDerivativeCheck:
    """
    Bound |<Phi(delta^(m)_tau_j), Phi(mu - mu*)>| for m = 1, 2 over the spikes l != j.

    The summation bounds only control the cross terms; the j-th self term
    a_j F^(m)(0) - a*_j F^(m)(tau_j - tau*_j) is reported alongside.
    Constants use alpha = (n+1) Delta(tau*) and beta = 2 (n+1) ||tau - tau*||_inf;
    the separation factor uses the smaller of Delta(tau) and Delta(tau*).

    Raises:
        DomainError: fewer than two spikes, or beta >= alpha / 2
    """
    shift = wrapped_difference(params.locations, truth.locations)
    alpha = wraparound_separation(truth.locations).scaled(n)
    beta = 2.0 * (n + 1) * float(np.abs(shift).max())
    constants = certified_bound_constants(BoundParams(alpha=alpha, beta=beta))
    separation = min(alpha, wraparound_separation(params.locations).scaled(n))

    amplitude_gap = float(np.abs(params.amplitudes - truth.amplitudes).max())
    truth_peak = float(np.abs(truth.amplitudes).max())
    location_gap = (n + 1) * float(np.abs(shift).max())

    own = np.subtract.outer(params.locations, params.locations)
    cross = np.subtract.outer(params.locations, truth.locations)
    checks = []
    self_terms = []
    for order in (1, 2):
        own_kernel = fejer_eval(own, n, order)
        cross_kernel = fejer_eval(cross, n, order)
        diagonal = np.diag(own_kernel) * params.amplitudes - np.diag(cross_kernel) * truth.amplitudes
        np.fill_diagonal(own_kernel, 0.0)
        np.fill_diagonal(cross_kernel, 0.0)
        lhs = float(np.abs(own_kernel @ params.amplitudes - cross_kernel @ truth.amplitudes).max())
        rhs = (
            constants.for_order(order) * amplitude_gap
            + constants.for_order(order + 1) * truth_peak * location_gap
        ) * (n + 1) ** order * separation ** -2
        checks.append(BoundCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs))
        self_terms.append(float(np.abs(diagonal).max()))
    return ResidualDerivativeCheck(checks[0], checks[1], self_terms[0], self_terms[1])


def _check_distance(distance: float) -> None:
    if not 0 <= distance < 1:
        raise DomainError(f"Weighted distance must lie in [0, 1), got {distance}")


def fixed_deviation_bound(
    distance: float,
    dynamic_range: float,
    amplitude_ratio: float,
    separation_scaled: float,
    constants: RegimeConstants = FIXED_REGIME,
) -> float:
    """
    Uniform bound with the invariant preconditioner.

    Args:
        distance: ||S (theta_k - theta*)||_inf
        dynamic_range: ||a*||_inf / a*_min
        amplitude_ratio: a*_min / A
        separation_scaled: (n+1) Delta(tau*)
    """
    _check_distance(distance)
    return (
        1.0 - amplitude_ratio ** 2 * (1.0 - distance) ** 2
        + (4.0 * constants.k_delta + constants.k_theta * distance)
        * dynamic_range * separation_scaled ** -2 * (1.0 + distance) ** 2
    )


def adaptive_deviation_bound(
    distance: float,
    dynamic_range: float,
    separation_scaled: float,
    constants: RegimeConstants = ADAPTIVE_REGIME,
) -> float:
    """Uniform bound with the adaptive preconditioner."""
    _check_distance(distance)
    shrink = (1.0 - distance) ** 2
    return (
        1.0 / shrink - 1.0
        + (4.0 * constants.k_delta + constants.k_theta * distance)
        * dynamic_range * separation_scaled ** -2 / shrink
    )


def segment_point(iterate: SpikeParams, truth: SpikeParams, fraction: float) -> SpikeParams:
    """theta* + fraction (theta_k - theta*), locations interpolated along the shorter arc."""
    return SpikeParams(
        amplitudes=truth.amplitudes + fraction * (iterate.amplitudes - truth.amplitudes),
        locations=truth.locations + fraction * wrapped_difference(iterate.locations, truth.locations),
    )


def segment_contraction(
    iterate: SpikeParams,
    truth: SpikeParams,
    precond,
    obs: Observation,
    points: int = 11,
) -> float:
    """max over a uniform grid of the segment [theta*, theta_k] of ||I - S P_k H S^{-1}||_inf."""
    if points < 2:
        raise DomainError(f"Segment grid needs at least two points, got {points}")
    return max(
        scaled_hessian_deviation(segment_point(iterate, truth, u), truth, precond, obs)
        for u in np.linspace(0.0, 1.0, points)
    )


@dataclass(frozen=True)
class HessianTrial:
    """A truth, an iterate theta_k at weighted distance `distance`, and a point of their segment."""
    n: int
    truth: SpikeParams
    iterate: SpikeParams
    point: SpikeParams
    distance: float
    a_scale: Optional[float] = None

    @property
    def separation_scaled(self) -> float:
        return wraparound_separation(self.truth.locations).scaled(self.n)

    @property
    def dynamic_range(self) -> float:
        moduli = np.abs(self.truth.amplitudes)
        return float(moduli.max() / moduli.min())


def _draw_regime_trial(
    rng: np.random.Generator,
    regime: RegimeConstants,
    n_range: tuple,
    max_distance: float,
    fixed: bool,
) -> HessianTrial:
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    max_r = max(2, int((n + 1) / (2.0 * regime.min_separation)))
    r = int(rng.integers(2, max_r + 1))
    spec = InstanceSpec(
        n=n, r=r, kappa=float(rng.uniform(1.0, 6.0)), min_sep_scaled=regime.min_separation, seed=0,
    )
    truth = gen_instance(spec, rng)
    distance = float(rng.uniform(0.0, max_distance))
    iterate = draw_equidistant_start(truth, n, distance, rng)
    point = segment_point(iterate, truth, float(rng.uniform()))
    a_scale = None
    if fixed:
        floor = max(1.5 * np.abs(truth.amplitudes).max(), np.abs(iterate.amplitudes).max())
        a_scale = float(floor * (1.0 + rng.uniform(0.0, 0.5)))
    return HessianTrial(n=n, truth=truth, iterate=iterate, point=point, distance=distance, a_scale=a_scale)


def draw_fixed_regime_trial(rng: np.random.Generator) -> HessianTrial:
    """(n+1) Delta >= 16.5, A >= max(3/2 ||a*||_inf, ||a_k||_inf), distance < 0.9."""
    return _draw_regime_trial(rng, FIXED_REGIME, (40, 100), 0.9, fixed=True)


def draw_adaptive_regime_trial(rng: np.random.Generator) -> HessianTrial:
    """(n+1) Delta >= 4.7, distance < 0.8."""
    return _draw_regime_trial(rng, ADAPTIVE_REGIME, (16, 64), 0.8, fixed=False)


class DeviationCheck(NamedTuple):
    deviation: float
    bound: float
    zero_residual_error: float
    holds: bool


def check_fixed_regime(trial: HessianTrial) -> DeviationCheck:
    obs = observe(trial.truth, PsfWeights.triangular(trial.n))
    precond = build_preconditioner(PreconditionerKind.INVARIANT, trial.iterate.amplitudes, trial.n, trial.a_scale)
    deviation = scaled_hessian_deviation(trial.point, trial.truth, precond, obs)
    a_min = float(np.abs(trial.truth.amplitudes).min())
    bound = fixed_deviation_bound(
        trial.distance, trial.dynamic_range, a_min / trial.a_scale, trial.separation_scaled,
    )
    return _deviation_check(trial, obs, deviation, bound)


def check_adaptive_regime(trial: HessianTrial) -> DeviationCheck:
    obs = observe(trial.truth, PsfWeights.triangular(trial.n))
    precond = build_preconditioner(PreconditionerKind.ADAPTIVE, trial.iterate.amplitudes, trial.n)
    deviation = scaled_hessian_deviation(trial.point, trial.truth, precond, obs)
    bound = adaptive_deviation_bound(trial.distance, trial.dynamic_range, trial.separation_scaled)
    return _deviation_check(trial, obs, deviation, bound)


def _deviation_check(trial: HessianTrial, obs: Observation, deviation: float, bound: float) -> DeviationCheck:
    at_truth = hessian_blocks(trial.truth, obs)
    zero_error = float(max(np.abs(at_truth.e1).max(), np.abs(at_truth.e2).max()))
    holds = deviation <= bound and zero_error <= ZERO_RESIDUAL_TOLERANCE
    if not holds:
        logger.warning(
            f"Hessian bound violated: n={trial.n} r={trial.truth.r} distance={trial.distance:.3f} "
            f"deviation={deviation:.6e} bound={bound:.6e} E(theta*)={zero_error:.3e}"
        )
    return DeviationCheck(deviation=deviation, bound=bound, zero_residual_error=zero_error, holds=holds)


# (n+1) Delta above which eta < 1 (at A = (3/2) ||a*||_inf) and gamma < 1/2, per unit kappa^{3/2} and kappa^{1/2}
FIXED_SEPARATION_FACTOR = math.sqrt(ETA_CONSTANT * 2.25)
ADAPTIVE_SEPARATION_FACTOR = math.sqrt(2.0 * GAMMA_CONSTANT)
CONTRACTION_TOLERANCE = 1e-9
CONTRACTION_MAX_ITERS = 150


@dataclass(frozen=True)
class ContractionTrial:
    """A noiseless instance inside one guarantee's hypotheses and a start inside its basin."""
    kind: PreconditionerKind
    n: int
    truth: SpikeParams
    start: SpikeParams
    a_scale: Optional[float] = None


def draw_fixed_contraction_trial(rng: np.random.Generator) -> ContractionTrial:
    n = int(rng.integers(90, 129))
    kappa = float(rng.uniform(1.0, 1.3))
    sep = 1.1 * FIXED_SEPARATION_FACTOR * kappa ** 1.5
    truth = gen_instance(InstanceSpec(n=n, r=2, kappa=kappa, min_sep_scaled=sep), rng)
    start = draw_equidistant_start(truth, n, float(rng.uniform(0.05, 0.8 * FIXED_BASIN_RADIUS)), rng)
    return ContractionTrial(PreconditionerKind.INVARIANT, n, truth, start, default_a_scale(truth))


def draw_adaptive_contraction_trial(rng: np.random.Generator) -> ContractionTrial:
    n = int(rng.integers(48, 97))
    kappa = float(rng.uniform(1.0, 6.0))
    sep = 1.5 * ADAPTIVE_SEPARATION_FACTOR * math.sqrt(kappa)
    r = max(2, min(3, int((n + 1) / (2.0 * sep))))
    truth = gen_instance(InstanceSpec(n=n, r=r, kappa=kappa, min_sep_scaled=sep), rng)
    start = draw_equidistant_start(truth, n, float(rng.uniform(0.02, 0.8 * ADAPTIVE_BASIN_RADIUS)), rng)
    return ContractionTrial(PreconditionerKind.ADAPTIVE, n, truth, start)


class ContractionCheck(NamedTuple):
    worst_ratio: float
    predicted_rate: float
    hypotheses_hold: bool
    holds: bool


def check_contraction(trial: ContractionTrial) -> ContractionCheck:
    """
    Run noiseless GD from the trial start and compare every per-iteration
    ratio ||S (theta_{k+1} - theta*)||_inf / ||S (theta_k - theta*)||_inf
    with the predicted rate of the scheme.
    """
    obs = observe(trial.truth, PsfWeights.triangular(trial.n))
    trace = run(
        trial.start, obs, trial.kind, truth=trial.truth,
        max_iters=CONTRACTION_MAX_ITERS, tol=CONTRACTION_TOLERANCE, a_scale=trial.a_scale,
    )
    rates = rate_constants(trial.truth, trial.n, trial.a_scale)
    if trial.kind is PreconditionerKind.INVARIANT:
        predicted, hypotheses = rates.predicted_rate_fixed, rates.fixed_hypotheses_hold
    else:
        predicted, hypotheses = rates.predicted_rate_adaptive, rates.adaptive_hypotheses_hold
    ratios = trace.contraction_ratios
    worst = float(ratios.max()) if ratios.size else 0.0
    holds = trace.converged and not trace.failed and worst <= predicted
    if hypotheses and not holds:
        logger.warning(
            f"Contraction violated: {trial.kind.value} n={trial.n} r={trial.truth.r} "
            f"worst ratio={worst:.6e} predicted={predicted:.6e} converged={trace.converged}"
        )
    return ContractionCheck(worst_ratio=worst, predicted_rate=predicted, hypotheses_hold=hypotheses, holds=holds)


@dataclass
class CheckSummary:
    name: str
    checked: int = 0
    violations: int = 0
    worst_ratio: float = 0.0

    def record(self, lhs: float, rhs: float, holds: bool) -> None:
        self.checked += 1
        self.violations += 0 if holds else 1
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        self.worst_ratio = max(self.worst_ratio, ratio)

    def csv_row(self) -> list:
        return [self.name, self.checked, self.violations, self.worst_ratio]


REPORT_HEADER = ['check', 'checked', 'violations', 'worst_ratio']


@dataclass
class BoundsReport:
    checks: List[CheckSummary] = field(default_factory=list)

    @property
    def violations(self) -> int:
        return sum(check.violations for check in self.checks)

    def by_name(self) -> Dict[str, CheckSummary]:
        return {check.name: check for check in self.checks}


def _draw_summation_config(rng: np.random.Generator):
    n = int(rng.integers(4, 65))
    max_r = min(12, (n + 1) // 2)
    r = int(rng.integers(2, max_r + 1))
    sep = float(rng.uniform(1.0, (n + 1) / (2.0 * r)))
    tau = gen_instance(InstanceSpec(n=n, r=r, kappa=1.0, min_sep_scaled=sep), rng).locations
    alpha = wraparound_separation(tau).scaled(n)
    reach = float(rng.uniform(0.0, 0.45)) * alpha / (n + 1)
    u = rng.uniform(-reach, reach, size=(r, r))
    return tau, n, u


def _check_published_constants(report: BoundsReport) -> None:
    summary = CheckSummary('published_constants')
    for (alpha, beta), ceilings in PUBLISHED_SUMMATION_CONSTANTS.items():
        computed: BoundConstants = bound_constants(BoundParams(alpha=alpha, beta=beta))
        for order, ceiling in zip((1, 2, 3), ceilings):
            value = computed.for_order(order)
            summary.record(value, ceiling, value <= ceiling)
    for alpha, ceilings in PUBLISHED_HESSIAN_CONSTANTS.items():
        computed = hessian_constants(alpha)
        for name, ceiling in ceilings.items():
            value = getattr(computed, name)
            summary.record(value, ceiling, value <= ceiling)
    report.checks.append(summary)


def verify_bounds(
    trials: int = 200,
    summation_trials: int = 1000,
    seed: int = 0,
) -> BoundsReport:
    """
    Run every certification on seeded random admissible configurations.

    Args:
        trials: Instances per Hessian regime, per contraction scheme and for the Gramian/residual checks
        summation_trials: Random configurations for the summation bounds, each at orders 0..3
        seed: Master seed

    Returns:
        BoundsReport with one CheckSummary per inequality family
    """
    report = BoundsReport()
    _check_published_constants(report)

    summation = CheckSummary('summation_bound')
    for index in range(summation_trials):
        tau, n, u = _draw_summation_config(make_rng([seed, 0, index]))
        for order in range(4):
            check = check_summation_bound(tau, n, order, u)
            summation.record(check.lhs, check.rhs, check.holds)
    report.checks.append(summation)

    gramian = CheckSummary('gramian_bound')
    residual_first = CheckSummary('residual_first_derivative')
    residual_second = CheckSummary('residual_second_derivative')
    fixed = CheckSummary('fixed_hessian_deviation')
    adaptive = CheckSummary('adaptive_hessian_deviation')
    for index in range(trials):
        trial = draw_fixed_regime_trial(make_rng([seed, 1, index]))
        check = check_fixed_regime(trial)
        fixed.record(check.deviation, check.bound, check.holds)

        trial = draw_adaptive_regime_trial(make_rng([seed, 2, index]))
        check = check_adaptive_regime(trial)
        adaptive.record(check.deviation, check.bound, check.holds)

        check = check_gramian_bound(trial.truth.locations, trial.n)
        gramian.record(check.lhs, check.rhs, check.holds)
        residual = check_residual_derivative_bound(trial.point, trial.truth, trial.n)
        residual_first.record(*residual.first)
        residual_second.record(*residual.second)
    report.checks.extend([gramian, residual_first, residual_second, fixed, adaptive])

    for name, draw, stream in (
        ('fixed_contraction', draw_fixed_contraction_trial, 3),
        ('adaptive_contraction', draw_adaptive_contraction_trial, 4),
    ):
        summary = CheckSummary(name)
        for index in range(trials):
            check = check_contraction(draw(make_rng([seed, stream, index])))
            if check.hypotheses_hold:
                summary.record(check.worst_ratio, check.predicted_rate, check.holds)
        report.checks.append(summary)

    for check in report.checks:
        logger.info(
            f"{check.name}: {check.checked} checked, {check.violations} violated, "
            f"worst lhs/rhs {check.worst_ratio:.4f}"
        )
    return report


def trial_weighted_distance(trial: HessianTrial) -> float:
    """Recomputed ||S (theta_k - theta*)||_inf of a drawn trial."""
    return weighted_error(trial.iterate, trial.truth, trial.n)
