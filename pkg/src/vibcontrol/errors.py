"""Exception hierarchy shared by all modules."""


class VibControlError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(VibControlError, ValueError):
    """Arguments or input files violate a documented precondition."""


class NumericalFailure(VibControlError, RuntimeError):
    """A numerical procedure did not reach its accuracy target."""


class AlgorithmFault(VibControlError, RuntimeError):
    """An internal consistency check failed (e.g. lost monotonic convergence)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class IOFailure(VibControlError, OSError):
    """Reading or writing a trajectory, checkpoint or table failed."""
