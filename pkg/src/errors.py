from typing import Optional

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""

    exit_code = EXIT_UNEXPECTED


class InvalidArgumentError(SimulationError, ValueError):
    exit_code = EXIT_USAGE


class GrowthCompleteError(SimulationError):
    """Raised when a growth step is requested on a fully occupied lattice."""

    exit_code = EXIT_USAGE


class ConfigError(SimulationError):
    exit_code = EXIT_USAGE


class NumericalError(SimulationError):
    """Eigensolver, residual or step-control failure.

    `matrix_dump` holds the offending operator in the plain-text `re,im`
    format so a failing realization can be reproduced offline.
    """

    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, matrix_dump: Optional[str] = None):
        super().__init__(message)
        self.matrix_dump = matrix_dump


class EnsembleAbortError(NumericalError):
    """Too many realizations failed even after re-seeding."""
