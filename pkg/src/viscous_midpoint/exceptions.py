"""Exception hierarchy shared by the library and the command line runner."""


class ViscousMidpointError(Exception):
    """Base class for every error raised by this package."""


class ModelStructureError(ViscousMidpointError, ValueError):
    """Matrices of a model have incompatible shapes or non-finite entries."""


class DimensionMismatchError(ViscousMidpointError, ValueError):
    """A state or right-hand side does not conform to the model."""


class SolverError(ViscousMidpointError, ArithmeticError):
    """A factorization failed; the model is not skew or not dissipative."""


class SimulationAborted(ViscousMidpointError, ArithmeticError):
    """A state became non-finite during time stepping."""

    def __init__(self, message, step=None, dt=None):
        super().__init__(message)
        self.step = step
        self.dt = dt


class StepBudgetExceeded(ViscousMidpointError):
    """A run would need more time steps than the configured budget."""


class ModelBuildError(ViscousMidpointError, ValueError):
    """A model specification cannot be turned into a system."""


class GridAlignmentError(ModelBuildError):
    pass


class StabilizabilityError(ModelBuildError):
    pass


class StencilSizeError(ModelBuildError):
    pass


class DegenerateFitError(ViscousMidpointError, ValueError):
    """Too few usable samples to fit an exponential envelope."""


class ConfigError(ViscousMidpointError, ValueError):
    """Malformed experiment configuration."""
