"""Exception types shared across the package.

ValueError (and subclasses) signal bad inputs or configuration and map to
CLI exit status 2; NumericalError and subclasses signal a computation that
started but could not finish and map to exit status 3.
"""


class NumericalError(RuntimeError):
    """A numerical procedure failed (quadrature, eigensolve, integration)."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested accuracy."""

    def __init__(self, message: str, achieved_error: float):
        super().__init__(message)
        self.achieved_error = achieved_error


class ConvergenceError(NumericalError):
    """Equilibration did not reach the residual tolerance in time."""

    def __init__(self, message: str, residual: float, steps: int):
        super().__init__(message)
        self.residual = residual
        self.steps = steps


class DivergenceError(NumericalError):
    """Non-finite values appeared during propagation."""

    def __init__(self, message: str, step: int, ado_index: int):
        super().__init__(message)
        self.step = step
        self.ado_index = ado_index


class DegeneratePoleError(ValueError):
    """A bath decomposition frequency coincides with the Drude cutoff.

    The coefficients of the dissipation operators contain 1/(gamma^2 - nu_k^2);
    perturb gamma slightly to move off the pole.
    """


class CapacityError(RuntimeError):
    """The hierarchy index space exceeds the configured budget."""

    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count
