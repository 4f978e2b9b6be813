"""
Seeded random problem instances and additive white Gaussian noise.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from services.exceptions import DomainError, InfeasibleInstanceError
from services.signal_model import Observation, SpikeParams, wraparound_separation

logger = logging.getLogger(__name__)

MAX_REJECTIONS = 10 ** 6

SeedLike = Union[int, Sequence[int]]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """PCG64 generator; a tuple seed gives an independent stream per (master, point, trial)."""
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class InstanceSpec:
    n: int = 32
    r: int = 6
    kappa: float = 1.0
    min_sep_scaled: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"n must be an integer >= 2, got {self.n}")
        if int(self.r) != self.r or self.r < 1:
            raise DomainError(f"r must be a positive integer, got {self.r}")
        if not self.kappa >= 1:
            raise DomainError(f"kappa must be >= 1, got {self.kappa}")
        if self.min_sep_scaled < 0:
            raise DomainError(f"min_sep_scaled must be nonnegative, got {self.min_sep_scaled}")
        if self.min_sep_scaled * self.r > self.n + 1:
            raise DomainError(
                f"Cannot place {self.r} spikes with (n+1)Delta >= {self.min_sep_scaled} at n={self.n}"
            )


@dataclass(frozen=True)
class NoiseSpec:
    snr: float = math.inf
    seed: int = 0

    def __post_init__(self):
        if not self.snr > 0:
            raise DomainError(f"SNR must be positive, got {self.snr}")


def db_to_linear(snr_db: float) -> float:
    return math.inf if math.isinf(snr_db) else 10.0 ** (snr_db / 10.0)


def gen_instance(spec: InstanceSpec, rng: Optional[np.random.Generator] = None) -> SpikeParams:
    """
    Draw locations by rejection until (n+1) Delta >= min_sep_scaled and
    amplitudes uniformly in the annulus 1 <= |a| <= kappa.

    Locations are returned in ascending order.

    Raises:
        InfeasibleInstanceError: no admissible draw after MAX_REJECTIONS attempts
    """
    rng = rng if rng is not None else make_rng(spec.seed)
    min_delta = spec.min_sep_scaled / (spec.n + 1)
    for attempt in range(MAX_REJECTIONS):
        locations = np.sort(rng.uniform(-0.5, 0.5, size=spec.r))
        if spec.r < 2 or wraparound_separation(locations).delta >= min_delta:
            break
    else:
        raise InfeasibleInstanceError(
            f"No admissible placement after {MAX_REJECTIONS} draws (n={spec.n}, r={spec.r}, "
            f"min_sep_scaled={spec.min_sep_scaled})"
        )
    moduli = rng.uniform(1.0, spec.kappa, size=spec.r)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=spec.r)
    logger.debug(f"Instance drawn after {attempt + 1} placement attempts")
    return SpikeParams(amplitudes=moduli * np.exp(1j * phases), locations=locations)


def noise_variance(clean: Observation, snr: float) -> float:
    """Per-sample variance sigma^2 = ||Phi(mu*)||^2 / (N snr)."""
    if math.isinf(snr):
        return 0.0
    return clean.energy() / (clean.psf.size * snr)


def add_noise(
    obs: Observation,
    spec: NoiseSpec,
    rng: Optional[np.random.Generator] = None,
) -> Observation:
    """
    Add circularly-symmetric complex Gaussian noise rescaled so that
    ||x||^2 / ||w||^2 equals spec.snr exactly.
    """
    if math.isinf(spec.snr):
        return obs
    rng = rng if rng is not None else make_rng(spec.seed)
    size = obs.psf.size
    w = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    w *= math.sqrt(obs.energy() / spec.snr) / np.linalg.norm(w)
    return Observation(samples=obs.samples + w, psf=obs.psf)
