"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Input data violates a structural or schema constraint."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to converge.

    ``location`` names the worst-mismatch bus or node, ``mismatch`` is the
    residual at that location.
    """

    def __init__(self, message, location=None, mismatch=None):
        super().__init__(message)
        self.location = location
        self.mismatch = mismatch


class SimulationAbort(RuntimeError):
    """Time-domain simulation stopped; ``time`` is the last good instant."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ProfileParseError(ValueError):
    """Profile file could not be parsed; carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        loc = f"{path}:{line}: " if line is not None else ""
        super().__init__(loc + message)
        self.path = path
        self.line = line
