"""
A module with generic remshare errors.
"""


class RemshareError(Exception):
    """
    A common superclass for all
    exceptions regarding remshare.
    """

    pass


class NumericalError(RemshareError):
    """
    A common superclass for failures of a numerical
    procedure (as opposed to bad input), i.e. those
    the command line reports with exit code 2.
    """

    pass


# == Measure errors ==


class MeasureError(RemshareError):
    """
    Raised on invalid atomic measures or invalid
    arguments to measure operations.
    """

    pass


# == Model errors ==


class ModelError(RemshareError):
    """
    A common superclass for all exceptions involving
    the primitive ingredients of the queueing model.
    """

    pass


class ParameterError(ModelError):
    """
    Raised when a distribution, arrival model or
    system parameter set is malformed.
    """

    pass


class WeightValidationError(ModelError):
    """
    Raised when a weight function violates w(0) = 0,
    w' > 0 or its declared bound at some grid point.
    """

    def __init__(self, message: str, point: float):
        super().__init__(message)
        self.point = point


# == Simulation errors ==


class SimulationError(RemshareError):
    """
    A common superclass for all exceptions
    involving remshare.simulator.
    """

    pass


class DegenerateStateError(SimulationError):
    """
    Raised when service shares are requested for a
    state whose weights are all zero.
    """

    pass


class StepFailureError(SimulationError, NumericalError):
    """
    Raised when the integrator cannot meet its tolerance
    even at the minimum step. Carries the state at the
    last good time.
    """

    def __init__(self, message: str, state):
        super().__init__(message)
        self.state = state


# == Fluid errors ==


class FluidError(RemshareError):
    """
    A common superclass for all exceptions
    involving remshare.fluid.
    """

    pass


class FloorViolationError(FluidError, NumericalError):
    """
    Raised when <w, mu> drops below the configured floor.
    Carries the time of the violation and the path
    computed up to the last good grid time, if any.
    """

    def __init__(self, message: str, time: float, path=None):
        super().__init__(message)
        self.time = time
        self.path = path


class NonConvergenceError(FluidError, NumericalError):
    """
    Raised when the Picard iteration exhausts its
    iteration budget on some window.
    """

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


# == Harness errors ==


class HarnessError(RemshareError):
    """
    Raised on malformed scaling experiments.
    """

    pass


# == Configuration errors ==


class ConfigIssue:
    """A single line-anchored configuration problem."""

    def __init__(self, line: int, path: str, message: str):
        self.line = line
        self.path = path
        self.message = message

    def __str__(self):
        return "line {}: {}: {}".format(self.line, self.path or "<root>", self.message)

    def __repr__(self):
        return "ConfigIssue({!r})".format(str(self))

    def as_dict(self) -> dict:
        return {"line": self.line, "path": self.path, "message": self.message}


class ConfigError(RemshareError):
    """
    Raised when a configuration text fails to lex, parse
    or validate. Carries every issue found, not only
    the first one.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(issue) for issue in self.issues))
