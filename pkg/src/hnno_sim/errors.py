"""Exception types raised across the simulator."""


class SimulationError(Exception):
    """Base class for simulator errors."""


class InvalidStateError(SimulationError, ValueError):
    """A device state lies outside its admissible range."""


class ConfigurationError(SimulationError, ValueError):
    """Inconsistent or invalid model / experiment configuration."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class OutOfLinearRangeError(SimulationError, ValueError):
    """Read voltage exceeds the linear (non-disturbing) read window."""


class FitError(SimulationError):
    """Exponential decay fit failed or returned a non-physical constant."""


class GeometryError(SimulationError, ValueError):
    """Invalid array geometry (overlapping pads, degenerate rings, ...)."""


class SolverError(SimulationError):
    """Iterative solver did not reach the requested tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class IngestionError(SimulationError, ValueError):
    """Malformed dataset file; message names the file and line."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class StratificationError(SimulationError, ValueError):
    """A class cannot be represented in every training fold."""
