"""Exception hierarchy and CLI exit codes for matcap."""
from __future__ import annotations

from typing import Dict, Type

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK_FAILED = 4


class MatcapError(ValueError):
    """Base class for all library errors.

    Subclasses ``ValueError`` so callers that only guard against bad input
    keep working.
    """

    exit_code: int = EXIT_NUMERICAL


class ShapeMismatch(MatcapError):
    """Operand dimensions are incompatible."""

    exit_code = EXIT_CONFIG


class NonConvergent(MatcapError):
    """A series or fixed-point iteration does not converge."""


class NotNormal(MatcapError):
    """A closed form that needs a normal matrix was given a non-normal one."""


class SingularCovariance(MatcapError):
    """A covariance matrix is not positive definite."""


class NotScalarLoss(MatcapError):
    """Backward pass requested from a node that is not 1x1."""


class Diverged(MatcapError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, iteration: int = -1) -> None:
        super().__init__(message)
        self.iteration = iteration


class SimulationOverflow(MatcapError):
    """A simulated state left the representable range."""

    def __init__(self, message: str, step: int = -1) -> None:
        super().__init__(message)
        self.step = step


class ConfigError(MatcapError):
    """Configuration could not be parsed or validated."""

    exit_code = EXIT_CONFIG


class CheckpointError(MatcapError):
    """A checkpoint file is missing, malformed or of an unknown version."""

    exit_code = EXIT_CONFIG


EXIT_CODES: Dict[Type[MatcapError], int] = {
    cls: cls.exit_code
    for cls in (
        ShapeMismatch,
        NonConvergent,
        NotNormal,
        SingularCovariance,
        NotScalarLoss,
        Diverged,
        SimulationOverflow,
        ConfigError,
        CheckpointError,
    )
}


def exit_code_for(exc: BaseException) -> int:
    """Map an exception raised by a command to the process exit code."""
    if isinstance(exc, MatcapError):
        return exc.exit_code
    return EXIT_NUMERICAL
