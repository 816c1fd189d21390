"""Exception hierarchy. Each family maps onto one CLI exit code."""


class SimulationError(Exception):
    exit_code = 1


class ConfigError(SimulationError, ValueError):
    exit_code = 2


class PhysicsValidityError(SimulationError):
    """The run left the regime in which the model is meaningful."""

    exit_code = 3


class BoundaryViolation(PhysicsValidityError):
    def __init__(self, message, step=None, partial=None):
        super().__init__(message)
        self.step = step
        self.partial = partial


class HeatingBudgetExceeded(PhysicsValidityError):
    pass


class NoDropletSolution(PhysicsValidityError):
    """Relaxation ended on the homogeneous state (pump below threshold)."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NumericalError(SimulationError):
    exit_code = 4

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConvergenceError(NumericalError):
    pass


class FitError(NumericalError):
    pass


class TrackingError(SimulationError):
    """No unambiguous intensity extremum to follow."""
