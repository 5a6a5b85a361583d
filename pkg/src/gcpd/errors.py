"""Exception hierarchy shared by all gcpd modules.

Two branches matter to callers: :class:`UserInputError` (bad flags, files or
data; CLI exit code 1) and :class:`NumericalError` (a computation could not
be completed on valid-looking input; CLI exit code 2).
"""


class GcpdError(Exception):
    """Base class for all errors raised by this package."""


class UserInputError(GcpdError):
    """Invalid configuration, flags or input data supplied by the caller."""


class NumericalError(GcpdError):
    """A numerical procedure failed on otherwise well-formed input."""


class NotPositiveDefinite(NumericalError):
    """Cholesky pivot fell below the relative tolerance floor."""


class SingularDesign(NumericalError):
    """The restricted Gram matrix of a least-squares problem is singular."""


class EmptySample(UserInputError):
    """A statistical routine received an empty sample."""


class ZeroJump(NumericalError):
    """Estimated jump size is (numerically) zero; interval inference is
    unavailable and the fit should be reported as low-signal."""


class SegmentTooShort(NumericalError):
    """A data segment has too few rows for the requested statistic."""


class HorizonTooSmall(NumericalError):
    """Too many simulated paths attained their maximum near the edge of the
    simulation horizon; quantiles would be unreliable."""


class ReferenceHasZeros(UserInputError):
    """The reference column of a compositional table contains zero counts."""


class MissingColumn(UserInputError):
    """A named column is absent from the input table."""


class EmptyAfterFilter(UserInputError):
    """No data columns survived the prevalence filter."""
