"""Exception hierarchy shared by all solver modules."""


class FracplastError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(FracplastError, ValueError):
    """A physical or numerical parameter is out of its admissible range."""


class ShapeError(FracplastError, ValueError):
    """Field arrays do not match the mesh they are evaluated on."""


class ConstraintError(FracplastError, RuntimeError):
    """Constraints are infeasible or leave the system under-determined."""


class SolverError(FracplastError, RuntimeError):
    """A subsolver failed to reach its requested tolerance."""

    def __init__(self, message, worst_element=None, report=None):
        super().__init__(message)
        self.worst_element = worst_element
        self.report = report


class NonConvergenceError(SolverError):
    """Alternate minimization exceeded an iteration cap.

    Carries the last iterate and the energy history so the caller can
    inspect how the iteration stalled.
    """

    def __init__(self, message, last_state=None, energy_history=None, step=None):
        super().__init__(message)
        self.last_state = last_state
        self.energy_history = list(energy_history) if energy_history else []
        self.step = step


class ConfigError(FracplastError, ValueError):
    """Configuration text failed to parse or validate."""

    def __init__(self, message, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key
