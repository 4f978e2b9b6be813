"""
Exception types raised by the spikegd services.
"""


class SpikeGDError(Exception):
    """Base class for every error raised by the library."""


class DomainError(SpikeGDError, ValueError):
    """An input violates a documented precondition."""


class DegenerateIterateError(SpikeGDError):
    """An iterate left the region where the preconditioner is defined."""

    def __init__(self, message: str, iteration: int = -1):
        super().__init__(message)
        self.iteration = iteration


class NumericalError(SpikeGDError):
    """A linear-algebra step failed (rank deficiency, singular matrix)."""


class InfeasibleInstanceError(SpikeGDError):
    """Random instance generation could not satisfy its constraints."""
