"""Exception types raised across the toolkit.

Every error carries a short machine-readable ``code`` (the class name) so the
command-line runner can print a one-line reason.
"""


class NormConvError(Exception):
    """Base class for all toolkit errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class InvalidParameter(NormConvError, ValueError):
    pass


class NonFiniteFunctionValue(InvalidParameter):
    pass


class RhoOutOfRange(InvalidParameter):
    pass


class HurstOutOfRange(InvalidParameter):
    pass


class NonPositiveParameter(InvalidParameter):
    pass


class NonPositiveInput(InvalidParameter):
    pass


class NotPSD(NormConvError, ArithmeticError):
    pass


class UnstableStep(InvalidParameter):
    pass


class GridMismatch(InvalidParameter):
    pass


class IntegralDiverged(NormConvError, ArithmeticError):
    pass


class TruncationTooCoarse(InvalidParameter):
    pass


class ZeroVariance(InvalidParameter):
    pass


class SingularPoint(InvalidParameter):
    pass


class AsymmetricMeasure(InvalidParameter):
    pass


class InfiniteActivity(InvalidParameter):
    pass


class OrderTooLarge(InvalidParameter):
    pass


class IndexOutOfRange(InvalidParameter, IndexError):
    pass


class UnknownAtom(InvalidParameter, LookupError):
    pass


class NotCentered(InvalidParameter):
    pass


class UnknownExperiment(NormConvError, LookupError):
    pass


class IoFailure(NormConvError, OSError):
    pass


class EmptyTailWarning(UserWarning):
    """Raised as a warning when a jump measure has no mass above the threshold."""


class InvalidExperimentWarning(UserWarning):
    """A configuration is outside the class of functionals the CLT covers."""
