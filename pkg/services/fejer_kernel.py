"""
Normalized Fejer kernel F_N, its first three derivatives and the summation
bounds used to certify the Hessian estimates.

F_N(t) = 1/(n+1) * sum_{k=-n..n} (1 - |k|/(n+1)) exp(i 2 pi k t),  N = 2n + 1.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from services.exceptions import DomainError

logger = logging.getLogger(__name__)

# Below this distance to the nearest integer the closed forms lose precision
# to 0/0 cancellation and the (exact) trigonometric sum is used instead.
SINGULAR_THRESHOLD = 1e-4

MAX_ORDER = 3

# Leading coefficient of C_3 in units of pi
C3_PUBLISHED_LEADING = 16.0 / 3.0
C3_CERTIFIED_LEADING = 64.0 / 3.0

ArrayLike = Union[float, np.ndarray]


def _check_kernel_args(n: int, order: int) -> None:
    if int(n) != n or n < 2:
        raise DomainError(f"Kernel half-bandwidth must be an integer n >= 2, got {n}")
    if order not in (0, 1, 2, 3):
        raise DomainError(f"Kernel derivative order must be 0..{MAX_ORDER}, got {order}")


def second_derivative_at_zero(n: int) -> float:
    """Return F_N''(0) = -(2/3) pi^2 n (n+2)."""
    return -2.0 / 3.0 * math.pi ** 2 * n * (n + 2)


def wrap_distance(x: ArrayLike) -> ArrayLike:
    """Distance from x to the nearest integer, i.e. |x| measured on the unit torus."""
    x = np.asarray(x, dtype=float)
    return np.abs(x - np.round(x))


def fejer_sum(t: ArrayLike, n: int, order: int = 0) -> np.ndarray:
    """
    Evaluate F_N^(order) by differentiating the trigonometric polynomial term by term.

    Exact everywhere, O(n) per point.
    """
    _check_kernel_args(n, order)
    k = np.arange(-n, n + 1)
    weights = (1.0 - np.abs(k) / (n + 1)) / (n + 1)
    coefficients = (2j * np.pi * k) ** order * weights
    phases = np.exp(2j * np.pi * np.multiply.outer(np.asarray(t, dtype=float), k))
    return np.real(phases @ coefficients)


def fejer_closed_form(t: ArrayLike, n: int, order: int = 0) -> np.ndarray:
    """
    Evaluate F_N^(order) from the closed form sin^2(pi (n+1) t) / ((n+1)^2 sin^2(pi t)).

    The derivatives are the Leibniz expansion of the product of
    A(t) = sin^2(pi (n+1) t) and B(t) = csc^2(pi t). Undefined at integers.
    """
    _check_kernel_args(n, order)
    t = np.asarray(t, dtype=float)
    m = n + 1
    u = np.pi * m * t
    sin_v = np.sin(np.pi * t)
    csc2 = 1.0 / sin_v ** 2
    cot = np.cos(np.pi * t) / sin_v
    sin2u = np.sin(2.0 * u)

    numerator = (
        np.sin(u) ** 2,
        np.pi * m * sin2u,
        2.0 * (np.pi * m) ** 2 * np.cos(2.0 * u),
        -4.0 * (np.pi * m) ** 3 * sin2u,
    )
    cosecant = (
        csc2,
        -2.0 * np.pi * csc2 * cot,
        np.pi ** 2 * csc2 * (6.0 * cot ** 2 + 2.0),
        -8.0 * np.pi ** 3 * csc2 * cot * (3.0 * cot ** 2 + 2.0),
    )
    total = sum(
        math.comb(order, j) * numerator[order - j] * cosecant[j]
        for j in range(order + 1)
    )
    return total / m ** 2


def fejer_eval(t: ArrayLike, n: int, order: int = 0) -> ArrayLike:
    """
    Evaluate the normalized Fejer kernel or one of its first three derivatives.

    Args:
        t: Point(s) on the torus; any real values are accepted (1-periodic)
        n: Half-bandwidth, N = 2n + 1
        order: Derivative order in 0..3

    Returns:
        A float for scalar input, otherwise an array shaped like t
    """
    _check_kernel_args(n, order)
    t_arr = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t_arr).ravel()
    dist = wrap_distance(flat)

    out = np.empty(flat.shape)
    near = dist < SINGULAR_THRESHOLD
    if np.any(~near):
        out[~near] = fejer_closed_form(flat[~near], n, order)
    if np.any(near):
        out[near] = fejer_sum(flat[near], n, order)
    # F_N is even: odd derivatives vanish at integers
    exact = dist == 0.0
    out[exact] = (1.0, 0.0, second_derivative_at_zero(n), 0.0)[order]

    if t_arr.ndim == 0:
        return float(out[0])
    return out.reshape(t_arr.shape)


@dataclass(frozen=True)
class BoundParams:
    """Separation parameter alpha <= (n+1) Delta and perturbation bound beta."""
    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if self.beta < 0:
            raise DomainError(f"beta must be nonnegative, got {self.beta}")
        if not self.beta < self.alpha / 2:
            raise DomainError(
                f"Summation bounds need beta < alpha/2, got alpha={self.alpha}, beta={self.beta}"
            )


@dataclass(frozen=True)
class BoundConstants:
    c0: float
    c1: float
    c2: float
    c3: float

    def for_order(self, order: int) -> float:
        return (self.c0, self.c1, self.c2, self.c3)[order]


def bound_constants(params: BoundParams) -> BoundConstants:
    """Closed-form constants C_0..C_3 of the kernel summation bounds, as published."""
    alpha = params.alpha
    g = 1.0 / (alpha - 2.0 * params.beta)
    pi = math.pi
    c0 = 4.0 / pi ** 2 * g * alpha
    c1 = (4.0 / pi * g + 8.0 / pi ** 2 * g ** 2) * alpha
    c2 = (80.0 / 9.0 * g + 16.0 / pi * g ** 2 + 64.0 / (3.0 * pi ** 2) * g ** 3) * alpha
    c3 = (
        C3_PUBLISHED_LEADING * pi * g
        + 1488.0 / 27.0 * g ** 2
        + 192.0 / pi * g ** 3
        + 192.0 / pi ** 2 * g ** 4
    ) * alpha
    return BoundConstants(c0=c0, c1=c1, c2=c2, c3=c3)


def certified_bound_constants(params: BoundParams) -> BoundConstants:
    """
    C_0..C_3 with the leading C_3 term carried through from
    4 pi^3 (n+1) sum_j (pi (n+1) |t_j|)^{-2}, i.e. (64/3) pi instead of (16/3) pi.

    The printed C_3 is exceeded by two near-antipodal spikes, where the
    order-3 sum approaches 4 pi^3 (n+1).
    """
    published = bound_constants(params)
    g = 1.0 / (params.alpha - 2.0 * params.beta)
    correction = (C3_CERTIFIED_LEADING - C3_PUBLISHED_LEADING) * math.pi * g * params.alpha
    return BoundConstants(c0=published.c0, c1=published.c1, c2=published.c2, c3=published.c3 + correction)


class SummationCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def min_pairwise_wrap_distance(tau: np.ndarray) -> float:
    """Smallest torus distance between two distinct entries of tau (inf when r < 2)."""
    tau = np.asarray(tau, dtype=float)
    if tau.size < 2:
        return math.inf
    dist = wrap_distance(np.subtract.outer(tau, tau))
    np.fill_diagonal(dist, np.inf)
    return float(dist.min())


def check_summation_bound(
    tau: np.ndarray,
    n: int,
    order: int,
    u: Optional[np.ndarray] = None,
) -> SummationCheck:
    """
    Compare max_i sum_{j != i} |F_N^(order)(tau_j - tau_i + u_ij)| with its bound.

    alpha and beta are taken as tight as the inputs allow:
    alpha = (n+1) Delta(tau), beta = (n+1) max |u_ij|.

    Args:
        tau: Locations on the torus
        n: Half-bandwidth
        order: Derivative order in 0..3
        u: Optional r x r perturbation matrix (diagonal ignored)

    Returns:
        SummationCheck(lhs, rhs, holds)
    """
    _check_kernel_args(n, order)
    tau = np.asarray(tau, dtype=float).ravel()
    r = tau.size
    if r < 2:
        return SummationCheck(0.0, math.inf, True)

    if u is None:
        u = np.zeros((r, r))
    u = np.array(u, dtype=float)
    if u.shape != (r, r):
        raise DomainError(f"Perturbation matrix must be {r}x{r}, got {u.shape}")
    np.fill_diagonal(u, 0.0)

    delta = min_pairwise_wrap_distance(tau)
    if delta == 0.0:
        raise DomainError("Locations must be pairwise distinct on the torus")
    alpha = (n + 1) * delta
    beta = (n + 1) * float(np.abs(u).max())
    constants = certified_bound_constants(BoundParams(alpha=alpha, beta=beta))

    diffs = tau[np.newaxis, :] - tau[:, np.newaxis] + u
    values = np.abs(fejer_eval(diffs, n, order))
    np.fill_diagonal(values, 0.0)
    lhs = float(values.sum(axis=1).max())
    rhs = constants.for_order(order) * (n + 1) ** order * alpha ** -2
    holds = lhs <= rhs
    if not holds:
        logger.warning(f"Summation bound violated: order={order} n={n} lhs={lhs:.6e} rhs={rhs:.6e}")
    return SummationCheck(lhs=lhs, rhs=rhs, holds=holds)
