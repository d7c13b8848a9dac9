"""Exception hierarchy shared by all harnacklab modules."""


class HarnackLabError(Exception):
    """Base class for every error raised by the package."""


class ConeViolation(HarnackLabError, ValueError):
    """Eigenvalues fall outside the admissible cone of a speed."""


class EigenFailure(HarnackLabError, ArithmeticError):
    """Spectral decomposition failed to converge."""


class NotPositiveDefinite(HarnackLabError, ValueError):
    pass


class NegativeEntry(HarnackLabError, ValueError):
    pass


class NoStrictLevel(HarnackLabError):
    """No facet level passes the strict inverse-concavity threshold."""


class NonPositiveKappa(HarnackLabError):
    """The inverse-concavity modulus search found a non-positive value.

    The violating witness is attached as ``witness``.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NoEpsilonFound(HarnackLabError):
    pass


class ConvexityLost(HarnackLabError):
    pass


class PoleSingularity(HarnackLabError, ArithmeticError):
    pass


class StepRejected(HarnackLabError):
    """A time step broke convexity or left the cone.

    ``suggested_dt`` carries the step size the caller should retry with.
    """

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class Extinct(HarnackLabError, ValueError):
    pass


class BisectionFailure(HarnackLabError):
    pass


class DegenerateCurvature(HarnackLabError, ValueError):
    pass


class InsufficientResolution(HarnackLabError, ValueError):
    pass


class ParseError(HarnackLabError, ValueError):
    pass


class RangeError(HarnackLabError, ValueError):
    pass
