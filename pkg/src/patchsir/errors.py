"""Exception hierarchy shared by all modules."""


class PatchSIRError(Exception):
    """Base class for package errors."""


class ConfigError(PatchSIRError, ValueError):
    """Invalid model or run configuration.

    ``errors`` holds every violation found, each prefixed with the field path.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class SolverError(PatchSIRError, RuntimeError):
    """Numerical failure in a deterministic solver."""

    def __init__(self, message, step=None, residual=None):
        self.step = step
        self.residual = residual
        super().__init__(message)


class NonConvergenceError(SolverError):
    """An iteration exhausted its budget before reaching tolerance."""


class AccuracyWarning(UserWarning):
    """A numerical result was repaired (e.g. renormalised) and may be inaccurate."""
