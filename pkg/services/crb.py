"""
Cramer-Rao bound of the spike parameters under white circular Gaussian noise.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from services.exceptions import NumericalError
from services.fejer_kernel import second_derivative_at_zero
from services.signal_model import PsfWeights, SpikeParams, atoms

logger = logging.getLogger(__name__)

# Condition number beyond which the Fisher information is treated as singular
MAX_FIM_CONDITION = 1e14


@dataclass(frozen=True)
class CrbReport:
    """
    Lower bounds on estimator variance in (Re a, Im a, tau) order, plus the
    S-weighted scalar benchmark comparable with ||S (theta - theta*)||_inf.
    """
    variances: np.ndarray
    fisher: np.ndarray
    amplitude_bounds: np.ndarray
    location_bounds: np.ndarray
    weighted_benchmark: float

    @property
    def r(self) -> int:
        return self.variances.size // 3


def observation_jacobian(truth: SpikeParams, psf: PsfWeights) -> np.ndarray:
    """N x 3r Jacobian of theta -> Phi(mu(theta)) over (Re a, Im a, tau)."""
    phi = atoms(truth.locations, psf)
    dphi = atoms(truth.locations, psf, 1) * truth.amplitudes[np.newaxis, :]
    return np.hstack([phi, 1j * phi, dphi])


def crb(truth: SpikeParams, psf: PsfWeights, noise_variance: float) -> CrbReport:
    """
    FIM = (2 / sigma^2) Re(J^H J); CRB = diag(FIM^{-1}).

    Amplitude j is summarized by sqrt(CRB_Re + CRB_Im) / |a*_j| and location j
    by sqrt(-F''(0) CRB_tau); the weighted benchmark is their maximum.

    Raises:
        NumericalError: singular Fisher information
    """
    jac = observation_jacobian(truth, psf)
    gram = np.real(jac.conj().T @ jac)
    r = truth.r
    condition = np.linalg.cond(gram)
    if not condition < MAX_FIM_CONDITION:
        raise NumericalError(f"Fisher information is singular (condition number {condition:.3e})")

    if noise_variance == 0:
        fisher = np.full_like(gram, np.inf)
        variances = np.zeros(3 * r)
    else:
        fisher = 2.0 / noise_variance * gram
        variances = noise_variance / 2.0 * np.diag(np.linalg.inv(gram))

    variances = np.maximum(variances, 0.0)
    amplitude_bounds = np.sqrt(variances[:r] + variances[r:2 * r]) / np.abs(truth.amplitudes)
    location_bounds = math.sqrt(-second_derivative_at_zero(psf.n)) * np.sqrt(variances[2 * r:])
    benchmark = float(max(amplitude_bounds.max(), location_bounds.max()))
    return CrbReport(
        variances=variances,
        fisher=fisher,
        amplitude_bounds=amplitude_bounds,
        location_bounds=location_bounds,
        weighted_benchmark=benchmark,
    )
