"""
The three desk-scale experiments: size of the basin of attraction, convergence
versus dynamic range, and noisy recovery versus SNR with the CRB overlay.

Every trial derives its own generator from (master seed, trial, point) so the
tables do not depend on how trials are scheduled across workers.
"""
import logging
import math
import multiprocessing
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.crb import crb
from services.exceptions import DomainError, SpikeGDError
from services.instances import (
    InstanceSpec,
    NoiseSpec,
    add_noise,
    db_to_linear,
    gen_instance,
    make_rng,
    noise_variance,
)
from services.preconditioned_gd import (
    PreconditionerKind,
    RunTrace,
    default_a_scale,
    run,
)
from services.signal_model import PsfWeights, SpikeParams, observe
from services.spectral_init import align_to_truth, omp_init
from services.fejer_kernel import second_derivative_at_zero

logger = logging.getLogger(__name__)

SUCCESS_THRESHOLD = 1e-2
EXPERIMENT_ITERATIONS = 200
TARGET_ERROR = 1e-6
SLOPE_FLOOR = 1e-13

BASIN_HEADER = ['distance', 'scheme', 'kappa', 'trials', 'successes', 'failures', 'success_rate']
CURVE_HEADER = ['kappa', 'scheme', 'iteration', 'weighted_error']
SLOPE_HEADER = ['kappa', 'scheme', 'slope_log10', 'iterations_to_target']
SNR_HEADER = [
    'snr_db', 'trials', 'mean_error_invariant', 'mean_error_adaptive',
    'failures_invariant', 'failures_adaptive', 'crb_weighted',
]
CRB_TABLE_HEADER = ['snr_db', 'trial', 'parameter', 'spike', 'variance']


def resolve_schemes(scheme: str) -> Tuple[PreconditionerKind, ...]:
    if scheme == 'both':
        return (PreconditionerKind.INVARIANT, PreconditionerKind.ADAPTIVE)
    return (PreconditionerKind(scheme),)


def parallel_map(func: Callable, tasks: Sequence, workers: int = 1) -> list:
    """Ordered map, through a spawn-context process pool when workers > 1."""
    if workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]
    ctx = multiprocessing.get_context('spawn')
    with ctx.Pool(min(workers, len(tasks))) as pool:
        return pool.map(func, tasks)


def trace_succeeded(trace: RunTrace, threshold: float = SUCCESS_THRESHOLD) -> bool:
    return not trace.failed and trace.records[-1].weighted_error <= threshold


def draw_equidistant_start(
    truth: SpikeParams,
    n: int,
    distance: float,
    rng: np.random.Generator,
) -> SpikeParams:
    """
    theta_0 with ||S (theta_0 - theta*)||_inf = distance.

    The 3r S-weighted real coordinates are drawn uniformly in [-1, 1] and
    rescaled onto the infinity sphere; amplitude perturbations are complex,
    so phases are perturbed too.
    """
    if distance < 0:
        raise DomainError(f"Initialization distance must be nonnegative, got {distance}")
    r = truth.r
    coords = rng.uniform(-1.0, 1.0, size=3 * r)
    relative = coords[:r] + 1j * coords[r:2 * r]
    shifts = coords[2 * r:]
    current = max(np.abs(relative).max(), np.abs(shifts).max())
    factor = distance / current if current > 0 else 0.0
    scale = math.sqrt(-second_derivative_at_zero(n))
    return SpikeParams(
        amplitudes=truth.amplitudes * (1.0 + factor * relative),
        locations=truth.locations + factor * shifts / scale,
    )


def fit_log_linear_slope(errors: np.ndarray, floor: float = SLOPE_FLOOR) -> float:
    """Least-squares slope of log10(error) against iteration, over errors above floor."""
    errors = np.asarray(errors, dtype=float)
    iterations = np.arange(errors.size)
    mask = np.isfinite(errors) & (errors > floor)
    if mask.sum() < 2:
        return math.nan
    return float(np.polyfit(iterations[mask], np.log10(errors[mask]), 1)[0])


def iterations_to_reach(errors: np.ndarray, target: float = TARGET_ERROR) -> int:
    """First iteration with error <= target, -1 when never reached."""
    hits = np.flatnonzero(np.asarray(errors) <= target)
    return int(hits[0]) if hits.size else -1


def fit_loglog_slope(snr_linear: Sequence[float], errors: Sequence[float]) -> float:
    snr_linear = np.asarray(snr_linear, dtype=float)
    errors = np.asarray(errors, dtype=float)
    mask = np.isfinite(snr_linear) & np.isfinite(errors) & (errors > 0)
    if mask.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log10(snr_linear[mask]), np.log10(errors[mask]), 1)[0])


def _a_scale(truth: SpikeParams, a_policy: Optional[float]) -> float:
    return default_a_scale(truth) if a_policy is None else a_policy


@dataclass(frozen=True)
class BasinTask:
    spec: InstanceSpec
    kinds: Tuple[PreconditionerKind, ...]
    distance: float
    point: int
    trial: int
    iterations: int
    a_policy: Optional[float]


def _basin_trial(task: BasinTask) -> Dict[str, Tuple[bool, bool]]:
    spec = task.spec
    truth = gen_instance(spec, make_rng([spec.seed, task.trial]))
    obs = observe(truth, PsfWeights.triangular(spec.n))
    start = draw_equidistant_start(truth, spec.n, task.distance, make_rng([spec.seed, task.trial, task.point]))
    outcome = {}
    for kind in task.kinds:
        trace = run(
            start, obs, kind, truth=truth, max_iters=task.iterations,
            a_scale=_a_scale(truth, task.a_policy),
        )
        outcome[kind.value] = (trace_succeeded(trace), trace.failed)
    return outcome


@dataclass
class BasinRow:
    distance: float
    scheme: str
    kappa: float
    trials: int
    successes: int
    failures: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else math.nan

    def csv_row(self) -> list:
        return [self.distance, self.scheme, self.kappa, self.trials, self.successes, self.failures, self.success_rate]


def basin_experiment(
    spec: InstanceSpec,
    scheme: str,
    distances: Sequence[float],
    trials: int,
    iterations: int = EXPERIMENT_ITERATIONS,
    a_policy: Optional[float] = None,
    workers: int = 1,
) -> List[BasinRow]:
    """Success rate of each scheme as a function of ||S (theta_0 - theta*)||_inf."""
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    kinds = resolve_schemes(scheme)
    rows = []
    for point, distance in enumerate(distances):
        tasks = [
            BasinTask(spec, kinds, float(distance), point, trial, iterations, a_policy)
            for trial in range(trials)
        ]
        outcomes = parallel_map(_basin_trial, tasks, workers)
        for kind in kinds:
            successes = sum(outcome[kind.value][0] for outcome in outcomes)
            failures = sum(outcome[kind.value][1] for outcome in outcomes)
            row = BasinRow(float(distance), kind.value, spec.kappa, trials, successes, failures)
            logger.info(f"Basin d={distance:.3f} {kind.value} kappa={spec.kappa}: rate={row.success_rate:.3f}")
            rows.append(row)
    return rows


@dataclass
class ConvergenceResult:
    kappa: float
    scheme: str
    errors: np.ndarray
    slope: float
    iterations_to_target: int
    failed: bool

    def curve_rows(self) -> List[list]:
        return [[self.kappa, self.scheme, i, err] for i, err in enumerate(self.errors)]

    def slope_row(self) -> list:
        return [self.kappa, self.scheme, self.slope, self.iterations_to_target]


@dataclass(frozen=True)
class ConvergenceTask:
    spec: InstanceSpec
    kinds: Tuple[PreconditionerKind, ...]
    iterations: int
    tol: float
    a_policy: Optional[float]


def _convergence_trial(task: ConvergenceTask) -> List[ConvergenceResult]:
    spec = task.spec
    truth = gen_instance(spec, make_rng(spec.seed))
    obs = observe(truth, PsfWeights.triangular(spec.n))
    start = align_to_truth(omp_init(obs, spec.r).params0, truth)
    results = []
    for kind in task.kinds:
        trace = run(
            start, obs, kind, truth=truth, max_iters=task.iterations, tol=task.tol,
            a_scale=_a_scale(truth, task.a_policy),
        )
        errors = trace.weighted_errors
        results.append(ConvergenceResult(
            kappa=spec.kappa,
            scheme=kind.value,
            errors=errors,
            slope=fit_log_linear_slope(errors),
            iterations_to_target=iterations_to_reach(errors),
            failed=trace.failed,
        ))
    return results


def convergence_experiment(
    specs: Sequence[InstanceSpec],
    scheme: str,
    iterations: int = EXPERIMENT_ITERATIONS,
    tol: float = 1e-14,
    a_policy: Optional[float] = None,
    workers: int = 1,
) -> List[ConvergenceResult]:
    """Weighted error against iteration from the spectral initialization, one curve per instance and scheme."""
    kinds = resolve_schemes(scheme)
    tasks = [ConvergenceTask(spec, kinds, iterations, tol, a_policy) for spec in specs]
    results = [result for batch in parallel_map(_convergence_trial, tasks, workers) for result in batch]
    for result in results:
        logger.info(
            f"Convergence kappa={result.kappa} {result.scheme}: slope={result.slope:.3f}, "
            f"iterations to {TARGET_ERROR:g}: {result.iterations_to_target}"
        )
    return results


@dataclass(frozen=True)
class SnrTask:
    spec: InstanceSpec
    snr_db: float
    point: int
    trial: int
    iterations: int
    a_policy: Optional[float]


def _snr_trial(task: SnrTask) -> dict:
    spec = task.spec
    truth = gen_instance(spec, make_rng([spec.seed, task.trial]))
    psf = PsfWeights.triangular(spec.n)
    clean = observe(truth, psf)
    snr = db_to_linear(task.snr_db)
    noisy = add_noise(clean, NoiseSpec(snr=snr), make_rng([spec.seed, task.trial, task.point]))
    report = crb(truth, psf, noise_variance(clean, snr))

    outcome = {'crb': report.weighted_benchmark, 'variances': report.variances}
    try:
        start = align_to_truth(omp_init(noisy, spec.r).params0, truth)
    except SpikeGDError as e:
        logger.warning(f"Initialization failed at snr={task.snr_db} trial={task.trial}: {e}")
        start = None
    for kind in (PreconditionerKind.INVARIANT, PreconditionerKind.ADAPTIVE):
        if start is None:
            outcome[kind.value] = math.nan
            continue
        trace = run(
            start, noisy, kind, truth=truth, max_iters=task.iterations,
            a_scale=_a_scale(truth, task.a_policy),
        )
        outcome[kind.value] = math.nan if trace.failed else trace.records[-1].weighted_error
    return outcome


@dataclass
class SnrRow:
    snr_db: float
    trials: int
    mean_error_invariant: float
    mean_error_adaptive: float
    failures_invariant: int
    failures_adaptive: int
    crb_weighted: float

    def csv_row(self) -> list:
        return [
            self.snr_db, self.trials, self.mean_error_invariant, self.mean_error_adaptive,
            self.failures_invariant, self.failures_adaptive, self.crb_weighted,
        ]


@dataclass
class SnrResult:
    rows: List[SnrRow]
    crb_table: List[list]


def _nanmean(values: List[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return float(np.mean(finite)) if finite else math.nan


def snr_experiment(
    spec: InstanceSpec,
    snr_db: Sequence[float],
    trials: int,
    iterations: int = EXPERIMENT_ITERATIONS,
    a_policy: Optional[float] = None,
    workers: int = 1,
) -> SnrResult:
    """Mean final weighted error of both schemes per SNR, with the mean weighted CRB."""
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    rows = []
    crb_table = []
    for point, level in enumerate(snr_db):
        tasks = [SnrTask(spec, float(level), point, trial, iterations, a_policy) for trial in range(trials)]
        outcomes = parallel_map(_snr_trial, tasks, workers)
        invariant = [o[PreconditionerKind.INVARIANT.value] for o in outcomes]
        adaptive = [o[PreconditionerKind.ADAPTIVE.value] for o in outcomes]
        row = SnrRow(
            snr_db=float(level),
            trials=trials,
            mean_error_invariant=_nanmean(invariant),
            mean_error_adaptive=_nanmean(adaptive),
            failures_invariant=sum(not math.isfinite(v) for v in invariant),
            failures_adaptive=sum(not math.isfinite(v) for v in adaptive),
            crb_weighted=float(np.mean([o['crb'] for o in outcomes])),
        )
        logger.info(
            f"SNR {level} dB: invariant={row.mean_error_invariant:.3e} "
            f"adaptive={row.mean_error_adaptive:.3e} crb={row.crb_weighted:.3e}"
        )
        rows.append(row)
        for trial, outcome in enumerate(outcomes):
            variances = outcome['variances']
            r = variances.size // 3
            for j in range(r):
                crb_table.append([float(level), trial, 're_a', j, variances[j]])
                crb_table.append([float(level), trial, 'im_a', j, variances[r + j]])
                crb_table.append([float(level), trial, 'tau', j, variances[2 * r + j]])
    return SnrResult(rows=rows, crb_table=crb_table)


def kappa_specs(base: InstanceSpec, kappas: Sequence[float]) -> List[InstanceSpec]:
    return [replace(base, kappa=float(kappa)) for kappa in kappas]
