"""
Spike parameters, the sampled Fourier observation operator, the least-squares
loss with its analytic gradient and the G/E/D decomposition of its Hessian.

Sample k = -n..n of a measure sum_l a_l delta_{tau_l} is
    x_k = g_k * sum_l a_l exp(-i 2 pi k tau_l),
so the Gramian of the operator is convolution with the Fejer kernel F_N.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from services.exceptions import DomainError
from services.fejer_kernel import fejer_eval, second_derivative_at_zero

logger = logging.getLogger(__name__)


def wrap_locations(locations: np.ndarray) -> np.ndarray:
    """Map locations onto the canonical interval [-1/2, 1/2)."""
    wrapped = np.mod(np.asarray(locations, dtype=float) + 0.5, 1.0) - 0.5
    # mod can return 1.0 for tiny negative inputs
    return np.where(wrapped >= 0.5, wrapped - 1.0, wrapped)


def wrapped_difference(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Signed torus difference x - y, in [-1/2, 1/2)."""
    return wrap_locations(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))


@dataclass(frozen=True)
class SpikeParams:
    """theta = [a; tau]: r complex amplitudes and r locations on the torus."""
    amplitudes: np.ndarray
    locations: np.ndarray

    def __post_init__(self):
        amplitudes = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex)).ravel()
        locations = np.atleast_1d(np.asarray(self.locations, dtype=float)).ravel()
        if amplitudes.size != locations.size:
            raise DomainError(
                f"Got {amplitudes.size} amplitudes but {locations.size} locations"
            )
        if amplitudes.size < 1:
            raise DomainError("At least one spike is required")
        if not (np.all(np.isfinite(amplitudes)) and np.all(np.isfinite(locations))):
            raise DomainError("Spike parameters must be finite")
        object.__setattr__(self, 'amplitudes', amplitudes)
        object.__setattr__(self, 'locations', wrap_locations(locations))

    @property
    def r(self) -> int:
        return self.amplitudes.size

    def to_real(self) -> np.ndarray:
        """Real parameterization (Re a, Im a, tau) in R^{3r}."""
        return np.concatenate([self.amplitudes.real, self.amplitudes.imag, self.locations])

    @classmethod
    def from_real(cls, vector: np.ndarray) -> 'SpikeParams':
        vector = np.asarray(vector, dtype=float)
        if vector.size % 3:
            raise DomainError(f"Real parameter vector length must be a multiple of 3, got {vector.size}")
        r = vector.size // 3
        return cls(vector[:r] + 1j * vector[r:2 * r], vector[2 * r:])

    def concat(self, other: 'SpikeParams') -> 'SpikeParams':
        return SpikeParams(
            np.concatenate([self.amplitudes, other.amplitudes]),
            np.concatenate([self.locations, other.locations]),
        )

    def permuted(self, order: np.ndarray) -> 'SpikeParams':
        return SpikeParams(self.amplitudes[order], self.locations[order])

    def scaled(self, factor: float) -> 'SpikeParams':
        return SpikeParams(self.amplitudes * factor, self.locations)


@dataclass(frozen=True)
class PsfWeights:
    """Square root of the triangular spectrum, normalized to unit Euclidean norm."""
    n: int
    g: np.ndarray

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"n must be an integer >= 2, got {self.n}")
        g = np.asarray(self.g, dtype=float)
        if g.shape != (2 * self.n + 1,):
            raise DomainError(f"PSF weights must have length {2 * self.n + 1}, got {g.shape}")
        if np.any(g < 0):
            raise DomainError("PSF weights must be nonnegative")
        object.__setattr__(self, 'g', g)

    @classmethod
    def triangular(cls, n: int) -> 'PsfWeights':
        k = np.arange(-n, n + 1)
        return cls(n=n, g=np.sqrt((1.0 - np.abs(k) / (n + 1)) / (n + 1)))

    @property
    def size(self) -> int:
        return 2 * self.n + 1

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(-self.n, self.n + 1)


@dataclass(frozen=True)
class Observation:
    """The N = 2n+1 complex samples x together with the PSF that produced them."""
    samples: np.ndarray
    psf: PsfWeights

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex).ravel()
        if samples.size != self.psf.size:
            raise DomainError(
                f"Observation has {samples.size} samples, PSF expects {self.psf.size}"
            )
        object.__setattr__(self, 'samples', samples)

    @property
    def n(self) -> int:
        return self.psf.n

    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real)


@dataclass(frozen=True)
class Separation:
    """Minimal wrap-around distance Delta(tau)."""
    delta: float

    def scaled(self, n: int) -> float:
        """The separation in units of the kernel width, (n+1) Delta."""
        return (n + 1) * self.delta


def wraparound_separation(locations: np.ndarray) -> Separation:
    """Minimal |tau_l - tau_l' + p| over pairs l != l' and shifts p in {-1, 0, 1}."""
    tau = wrap_locations(locations).ravel()
    if tau.size < 2:
        raise DomainError("Separation is undefined for fewer than two spikes")
    diffs = np.subtract.outer(tau, tau)
    dist = np.min(np.abs(np.stack([diffs - 1.0, diffs, diffs + 1.0])), axis=0)
    np.fill_diagonal(dist, np.inf)
    return Separation(delta=float(dist.min()))


def atoms(locations: np.ndarray, psf: PsfWeights, order: int = 0) -> np.ndarray:
    """
    Columns Phi(delta^(order)_{tau_j}): (-i 2 pi k)^order g_k exp(-i 2 pi k tau_j).

    Returns an N x r complex matrix.
    """
    k = psf.frequencies
    phases = np.exp(-2j * np.pi * np.multiply.outer(k, np.asarray(locations, dtype=float)))
    return ((-2j * np.pi * k) ** order * psf.g)[:, np.newaxis] * phases


def observe(params: SpikeParams, psf: PsfWeights) -> Observation:
    return Observation(samples=atoms(params.locations, psf) @ params.amplitudes, psf=psf)


def residual(params: SpikeParams, obs: Observation) -> np.ndarray:
    """Phi(mu(theta)) - x."""
    return atoms(params.locations, obs.psf) @ params.amplitudes - obs.samples


def loss(params: SpikeParams, obs: Observation) -> float:
    res = residual(params, obs)
    return 0.5 * float(np.vdot(res, res).real)


def residual_correlations(params: SpikeParams, obs: Observation, order: int) -> np.ndarray:
    """<Phi(delta^(order)_{tau_j}), Phi(mu(theta)) - x> for every spike j."""
    return atoms(params.locations, obs.psf, order).conj().T @ residual(params, obs)


class Gradient(NamedTuple):
    amplitudes: np.ndarray
    locations: np.ndarray

    def to_real(self) -> np.ndarray:
        """Gradient of the loss in the (Re a, Im a, tau) coordinates."""
        return np.concatenate([self.amplitudes.real, self.amplitudes.imag, self.locations])

    def max_norm(self) -> float:
        return float(max(np.abs(self.amplitudes).max(), np.abs(self.locations).max()))


def gradient(params: SpikeParams, obs: Observation) -> Gradient:
    """
    Analytic gradient in sample-domain form, valid for noisy observations.

    grad_a_j = <Phi(delta_tau_j), r> equals dL/dRe(a_j) + i dL/dIm(a_j);
    grad_tau_j = Re(conj(a_j) <Phi(delta'_tau_j), r>).
    """
    res = residual(params, obs)
    grad_a = atoms(params.locations, obs.psf).conj().T @ res
    first = atoms(params.locations, obs.psf, 1).conj().T @ res
    grad_tau = np.real(np.conj(params.amplitudes) * first)
    return Gradient(amplitudes=grad_a, locations=grad_tau)


def gradient_kernel_form(params: SpikeParams, truth: SpikeParams, n: int) -> Gradient:
    """Gradient written with Fejer kernel sums; only valid for noiseless data from truth."""
    own = np.subtract.outer(params.locations, params.locations)
    cross = np.subtract.outer(params.locations, truth.locations)
    grad_a = fejer_eval(own, n, 0) @ params.amplitudes - fejer_eval(cross, n, 0) @ truth.amplitudes
    slope = fejer_eval(own, n, 1) @ params.amplitudes - fejer_eval(cross, n, 1) @ truth.amplitudes
    return Gradient(amplitudes=grad_a, locations=np.real(np.conj(params.amplitudes) * slope))


@dataclass(frozen=True)
class HessianBlocks:
    """H(theta) = G(theta) + E(theta) with G = W^H D W, W = diag([1_r; sqrt(-F''(0)) a])."""
    d0: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    g_matrix: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    h: np.ndarray

    @property
    def r(self) -> int:
        return self.d0.shape[0]

    def d_matrix(self) -> np.ndarray:
        return np.block([[self.d0, self.d1], [self.d1.T, self.d2]])

    def e_matrix(self) -> np.ndarray:
        zeros = np.zeros_like(self.e1)
        return np.block([[zeros, self.e1], [self.e1.conj().T, self.e2]])


def gramian_blocks(locations: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """D0, D1, D2: the normalized kernel matrices F, -F'/sqrt(-F''(0)), F''/F''(0) at tau_i - tau_j."""
    fpp0 = second_derivative_at_zero(n)
    diffs = np.subtract.outer(locations, locations)
    d0 = fejer_eval(diffs, n, 0)
    d1 = -fejer_eval(diffs, n, 1) / math.sqrt(-fpp0)
    d2 = fejer_eval(diffs, n, 2) / fpp0
    return d0, d1, d2


def hessian_blocks(params: SpikeParams, obs: Observation) -> HessianBlocks:
    """
    Assemble the D blocks, G, the diagonal E blocks and H = G + E.

    E is evaluated through the sampled residual so it also applies to noisy data;
    E2_jj = conj(a_j) <Phi(delta''_tau_j), r>, consistent with the location gradient.
    """
    n = obs.n
    scale = math.sqrt(-second_derivative_at_zero(n))
    d0, d1, d2 = gramian_blocks(params.locations, n)
    d_matrix = np.block([[d0, d1], [d1.T, d2]])
    w = np.concatenate([np.ones(params.r), scale * params.amplitudes])
    g_matrix = np.conj(w)[:, np.newaxis] * d_matrix * w[np.newaxis, :]

    first = residual_correlations(params, obs, 1)
    second = residual_correlations(params, obs, 2)
    e1 = np.diag(first)
    e2 = np.diag(np.conj(params.amplitudes) * second)
    e_matrix = np.block([[np.zeros_like(e1), e1], [e1.conj().T, e2]])

    return HessianBlocks(
        d0=d0, d1=d1, d2=d2, g_matrix=g_matrix, e1=e1, e2=e2, h=g_matrix + e_matrix,
    )


def real_hessian(blocks: HessianBlocks) -> np.ndarray:
    """
    The 3r x 3r real Hessian in (Re a, Im a, tau) coordinates implied by H.

    H_aa and H_a,tau act complex-linearly on the amplitude rows, so each
    complex entry M expands to [[Re M, -Im M], [Im M, Re M]] over (Re, Im);
    the location block is Re(H_tau,tau).
    """
    r = blocks.r
    h = blocks.h
    h_aa, h_at, h_tt = h[:r, :r], h[:r, r:], h[r:, r:]
    return np.block([
        [h_aa.real, -h_aa.imag, h_at.real],
        [h_aa.imag, h_aa.real, h_at.imag],
        [h_at.real.T, h_at.imag.T, h_tt.real],
    ])


def weight_vector(truth: SpikeParams, n: int) -> np.ndarray:
    """Diagonal of S = diag([1/a*; sqrt(-F''(0)) 1_r])."""
    if np.any(truth.amplitudes == 0):
        raise DomainError("Weighting matrix needs nonzero true amplitudes")
    scale = math.sqrt(-second_derivative_at_zero(n))
    return np.concatenate([1.0 / truth.amplitudes, np.full(truth.r, scale, dtype=complex)])


def infinity_norm(matrix: np.ndarray) -> float:
    """Maximum absolute row sum, complex entries contributing their modulus."""
    return float(np.abs(matrix).sum(axis=1).max())


def scaled_hessian_deviation(
    params: SpikeParams,
    truth: SpikeParams,
    precond,
    obs: Observation,
) -> float:
    """
    ||S P H(params) S^{-1} - I||_inf with S built from truth.

    precond is a Preconditioner or its raw diagonal of length 2r.
    """
    s = weight_vector(truth, obs.n)
    p = np.asarray(getattr(precond, 'diag', precond))
    if p.shape != (2 * params.r,):
        raise DomainError(f"Preconditioner must have {2 * params.r} entries, got {p.shape}")
    h = hessian_blocks(params, obs).h
    scaled = (s * p)[:, np.newaxis] * h / s[np.newaxis, :]
    return infinity_norm(scaled - np.eye(2 * params.r))
