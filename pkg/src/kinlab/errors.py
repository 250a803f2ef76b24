"""Exception and warning types shared across the package."""


class KinlabError(Exception):
    """Base class for all package errors."""


class RayDegenerate(KinlabError):
    """Query point sits on the boundary or the ray is (numerically) grazing."""


class NoConvergence(KinlabError):
    """An iterative solver hit its iteration cap."""


class DegenerateGradient(KinlabError):
    """The implicit function has a vanishing gradient at a boundary point."""


class CurvatureDegenerate(KinlabError):
    """A sampled principal curvature is not strictly positive."""


class QuadratureFailure(KinlabError):
    """Adaptive refinement exceeded its depth cap."""


class CoincidentVelocities(KinlabError):
    """Kernel evaluated on its singular diagonal."""


class BudgetExceeded(KinlabError):
    """A nested evaluation would exceed the configured node budget."""


class MembershipViolation(KinlabError):
    """A mapped tuple left the target domain of a change of variables."""

    def __init__(self, message, tuple_=None):
        super().__init__(message)
        self.tuple = tuple_


class UnknownCheck(KinlabError):
    """Requested check name is not registered."""


class ConfigError(KinlabError):
    """A run configuration could not be parsed or validated."""


class TruncationWarning(UserWarning):
    """Estimated mass beyond the velocity cutoff exceeds the tail tolerance."""


class AliasWarning(UserWarning):
    """Too much spectral energy sits in the top octave of the FFT grid."""


class ShellFloorDominant(UserWarning):
    """Extrapolated sub-floor contribution is a large share of a seminorm estimate."""
