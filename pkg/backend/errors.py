"""Exception types shared across the toolkit.

Each error carries the process exit status the command line reports for it:
0 success, 1 computational failure, 2 configuration or input error.
"""

from typing import Any, Dict, Optional


class SpectralKineticsError(Exception):
    """Base error with an exit status and structured details."""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = dict(details or {})

    def annotate(self, **coords: Any) -> "SpectralKineticsError":
        self.details.update(coords)
        return self


class ConfigurationError(SpectralKineticsError):
    exit_code = 2


class InputDataError(SpectralKineticsError):
    exit_code = 2


class DomainError(SpectralKineticsError, ValueError):
    """Argument outside the domain of a formula."""


class DegenerateFitError(SpectralKineticsError):
    pass


class ConvergenceError(SpectralKineticsError):
    """Iterative solver hit its iteration cap; details carry the residual."""


class DivergenceError(SpectralKineticsError):
    """Every realization of an ensemble diverged."""


class SuperCriticalError(SpectralKineticsError):
    """Temperature at or above the Laplace-space positivity bound."""


class StepSizeError(SpectralKineticsError):
    pass
