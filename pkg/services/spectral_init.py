"""
Grid-based spectral initialization: orthogonal matching pursuit over the
weighted DFT dictionary diag(g) F_N, whose column k is the observation of a
unit spike at the grid point k/N.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from services.exceptions import DomainError, NumericalError
from services.fejer_kernel import wrap_distance
from services.signal_model import Observation, PsfWeights, SpikeParams, atoms

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridAtomDictionary:
    n: int
    atoms: np.ndarray

    @classmethod
    def build(cls, psf: PsfWeights) -> 'GridAtomDictionary':
        j = psf.frequencies
        grid = psf.frequencies
        dft = np.exp(-2j * np.pi * np.multiply.outer(j, grid) / psf.size)
        return cls(n=psf.n, atoms=psf.g[:, np.newaxis] * dft)

    @property
    def size(self) -> int:
        return 2 * self.n + 1

    def grid_locations(self, indices: np.ndarray) -> np.ndarray:
        """Grid index k in -n..n -> location k/N."""
        return np.asarray(indices, dtype=float) / self.size

    def column(self, index: int) -> np.ndarray:
        return self.atoms[:, index + self.n]


# Cyclic refinement passes per OMP round and Newton steps per location
DEFAULT_REFINE_CYCLES = 2
NEWTON_STEPS = 3
# Grid points closer than this many cells to a selected spike are not selectable
MASK_RADIUS_CELLS = 1.0


@dataclass(frozen=True)
class InitResult:
    """
    support and params0 are the grid solution (locations k/N, least-squares
    amplitudes on the grid atoms); refined keeps the off-grid locations the
    selection worked with.
    """
    support: np.ndarray
    params0: SpikeParams
    residual_norms: np.ndarray
    refined: SpikeParams


def _least_squares(columns: np.ndarray, x: np.ndarray) -> np.ndarray:
    coefficients, _, rank, _ = scipy.linalg.lstsq(columns, x)
    if rank < columns.shape[1]:
        raise NumericalError(f"Support least squares is rank deficient (rank {rank} < {columns.shape[1]})")
    return coefficients


def _correlations(tau: float, target: np.ndarray, psf: PsfWeights) -> np.ndarray:
    """c(tau), c'(tau), c''(tau) with c(tau) = <Phi(delta_tau), target>."""
    columns = np.hstack([atoms([tau], psf, order) for order in range(3)])
    return columns.conj().T @ target


def refine_location(
    target: np.ndarray,
    tau: float,
    center: float,
    psf: PsfWeights,
    steps: int = NEWTON_STEPS,
) -> float:
    """
    Newton ascent of |c(tau)|^2 for a single atom fitted to target, kept
    within half a grid cell of center.

    A step is taken only where |c|^2 is locally concave and accepted only if
    it increases |c|^2, so the single-atom residual never grows.
    """
    half_cell = 0.5 / psf.size
    for _ in range(steps):
        c, c1, c2 = _correlations(tau, target, psf)
        value = abs(c) ** 2
        slope = 2.0 * float((np.conj(c) * c1).real)
        curvature = 2.0 * float(abs(c1) ** 2 + (np.conj(c) * c2).real)
        if not curvature < 0:
            break
        candidate = center + float(np.clip(tau - slope / curvature - center, -half_cell, half_cell))
        if not abs(_correlations(candidate, target, psf)[0]) ** 2 > value:
            break
        tau = candidate
    return tau


def omp_init(obs: Observation, r: int, refine_cycles: int = DEFAULT_REFINE_CYCLES) -> InitResult:
    """
    Greedy solve of min ||x - diag(g) F_N u||_2 s.t. ||u||_0 <= r.

    Each round selects the grid atom most correlated with the residual
    (unit-normalized atoms, lowest index on ties), skipping grid points
    within MASK_RADIUS_CELLS of a spike already selected. The selected spikes
    are then refined off the grid, each inside its own cell, by
    refine_cycles cyclic passes of refine_location followed by a joint
    least-squares fit, and the next residual is taken against that refined
    model. refine_cycles=0 is plain OMP with neighbour masking.

    The returned params0 sits on the grid: selected points k/N with the
    least-squares amplitudes of their grid atoms, sorted by location.
    residual_norms[i] is the grid least-squares residual after i rounds.

    Raises:
        DomainError: r outside 1..N, or negative refine_cycles
        NumericalError: rank-deficient support
    """
    psf = obs.psf
    n_samples = psf.size
    if not 1 <= r <= n_samples:
        raise DomainError(f"Model order must satisfy 1 <= r <= {n_samples}, got {r}")
    if refine_cycles < 0:
        raise DomainError(f"refine_cycles must be nonnegative, got {refine_cycles}")

    dictionary = GridAtomDictionary.build(psf)
    grid_atoms = dictionary.atoms
    norms = np.linalg.norm(grid_atoms, axis=0)
    grid = dictionary.grid_locations(psf.frequencies)
    x = obs.samples
    residual = x.copy()
    support = []
    locations = []
    amplitudes = np.zeros(0, dtype=complex)
    coefficients = np.zeros(0, dtype=complex)
    residual_norms = [float(np.linalg.norm(x))]

    for _ in range(r):
        scores = np.abs(grid_atoms.conj().T @ residual) / norms
        scores[support] = -np.inf
        if locations:
            near = wrap_distance(np.subtract.outer(grid, np.array(locations))).min(axis=1)
            masked = np.where(near * n_samples < MASK_RADIUS_CELLS, -np.inf, scores)
            if np.isfinite(masked.max()):
                scores = masked
        column = int(np.argmax(scores))
        support.append(column)
        locations.append(float(grid[column]))

        amplitudes = _least_squares(atoms(locations, psf), x)
        for _ in range(refine_cycles):
            residual = x - atoms(locations, psf) @ amplitudes
            for j, center in enumerate(grid[support]):
                atom = atoms([locations[j]], psf)[:, 0]
                target = residual + amplitudes[j] * atom
                locations[j] = refine_location(target, locations[j], float(center), psf)
                atom = atoms([locations[j]], psf)[:, 0]
                amplitudes[j] = np.vdot(atom, target) / np.vdot(atom, atom).real
                residual = target - amplitudes[j] * atom
            amplitudes = _least_squares(atoms(locations, psf), x)
        residual = x - atoms(locations, psf) @ amplitudes

        sub = grid_atoms[:, support]
        coefficients = _least_squares(sub, x)
        residual_norms.append(float(np.linalg.norm(x - sub @ coefficients)))

    indices = np.array(support) - obs.n
    order = np.argsort(indices)
    params0 = SpikeParams(
        amplitudes=coefficients[order],
        locations=dictionary.grid_locations(indices[order]),
    )
    refined = SpikeParams(amplitudes=amplitudes[order], locations=np.array(locations)[order])
    logger.debug(f"OMP support {indices[order].tolist()}, final residual {residual_norms[-1]:.3e}")
    return InitResult(
        support=indices[order],
        params0=params0,
        residual_norms=np.array(residual_norms),
        refined=refined,
    )


def align_to_truth(estimate: SpikeParams, truth: SpikeParams) -> SpikeParams:
    """Reorder estimate so spike j is matched to truth spike j (min total wrap distance)."""
    if estimate.r != truth.r:
        raise DomainError(f"Cannot align {estimate.r} estimated spikes to {truth.r} true spikes")
    cost = wrap_distance(np.subtract.outer(truth.locations, estimate.locations))
    _, columns = linear_sum_assignment(cost)
    return estimate.permuted(columns)
