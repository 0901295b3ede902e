"""Exception hierarchy shared by all modules."""


class AndersonLabError(Exception):
    """Base class for every error raised by this package."""


class EmptyDomain(AndersonLabError):
    """No lattice site satisfies the discretization rule (eps too large)."""


class InvalidShape(AndersonLabError, ValueError):
    pass


class InfeasibleSpec(AndersonLabError, ValueError):
    """The per-site law cannot match the requested mean/variance inside [a, b]."""

    def __init__(self, message, site=None):
        super().__init__(message)
        self.site = site


class TooLarge(AndersonLabError, ValueError):
    pass


class DimensionMismatch(AndersonLabError, ValueError):
    pass


class NoConvergence(AndersonLabError, RuntimeError):
    def __init__(self, message, iterations=None, worst_residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.worst_residual = worst_residual


class DegenerateEigenvalue(AndersonLabError, ValueError):
    pass


class DegeneracyCrossing(DegenerateEigenvalue):
    """The eigenvalue stopped being simple somewhere along a parameter path."""


class NotOrthonormal(AndersonLabError, ValueError):
    pass


class ResolutionTooCoarse(AndersonLabError, ValueError):
    pass


class DegenerateLimit(AndersonLabError, ValueError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class InsufficientSamples(AndersonLabError, ValueError):
    pass
