"""Exception types shared across the package."""


class SedlabError(Exception):
    """Base class of every error raised on purpose by this package."""


class DomainError(SedlabError, ValueError):
    """Input outside the mathematical domain of an operation."""


class SingularityError(DomainError):
    """Evaluation at a kernel singularity."""


class CapabilityError(SedlabError, RuntimeError):
    """Request exceeds a configured size cap or a documented restriction."""


class OverlapError(SedlabError, RuntimeError):
    """Two spheres overlap (center distance <= 2R)."""

    def __init__(self, message, pair=None, distance=None):
        super().__init__(message)
        self.pair = pair
        self.distance = distance


class IterationDivergenceError(SedlabError, RuntimeError):
    """The reflection series stopped contracting."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NumericalError(SedlabError, RuntimeError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class ResolutionError(SedlabError, RuntimeError):
    """Discretization too coarse for the requested accuracy."""


class DensityInfeasibleError(SedlabError, RuntimeError):
    """Could not place non-overlapping spheres after repeated attempts."""
