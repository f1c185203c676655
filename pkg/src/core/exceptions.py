"""
Exception Hierarchy.

All errors raised by the simulator derive from `PcceError`, so the CLI layer
can translate them into exit codes in one place. Errors that signal a violated
precondition on an argument value also derive from `ValueError`.
"""

from typing import Optional


class PcceError(Exception):
    """Base class for every simulator error."""


class ConfigError(PcceError, ValueError):
    """A configuration document failed validation."""

    def __init__(self, message: str, field_path: Optional[str] = None) -> None:
        self.field_path = field_path
        prefix = f"{field_path}: " if field_path else ""
        super().__init__(f"{prefix}{message}")


class CoincidentSpinsError(PcceError, ValueError):
    """Two spins (or a spin and the NV) occupy the same position."""


class CapacityError(PcceError):
    """A Hilbert space exceeds the configured dimension cap."""


class InvariantError(PcceError):
    """An internal consistency check failed (non-Hermitian H, rising objective, ...)."""


class EmptyBathError(PcceError):
    """The sampled region holds no dynamic bath spin."""


class PaddingExhaustedError(PcceError):
    """Not enough shell spins of a subgroup to make its dynamic count divisible by K."""


class PartitionSizeError(PcceError, ValueError):
    """The number of points is not divisible by the partition size."""


class TrotterStepError(PcceError):
    """Halving the Trotter step still changes the echo curve by more than the tolerance."""


class RealizationError(PcceError):
    """A disorder realization failed; carries the bath seed for reproduction."""

    def __init__(self, message: str, realization: int, seed: int) -> None:
        self.realization = realization
        self.seed = seed
        super().__init__(f"realization {realization} (seed {seed}): {message}")


class FitError(PcceError):
    """Base class for stretched-exponential fitting failures."""


class UndefinedLogError(FitError, ValueError):
    """ln(-ln Mx) is undefined because Mx >= 1 inside the fit window."""


class InsufficientDataError(FitError, ValueError):
    """Fewer points than the fit requires."""
