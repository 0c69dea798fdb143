"""Exception hierarchy shared by every vtpmd module."""


class VtpmdError(Exception):
    """Base class; the CLI maps any subclass to exit code 1."""


class DimensionMismatch(VtpmdError, ValueError):
    pass


class NonFiniteError(VtpmdError, ValueError):
    pass


class SingularMatrix(VtpmdError, ArithmeticError):
    """Raised by LU and triangular solves. ``factors`` holds the partial result, if any."""

    def __init__(self, msg, factors=None):
        super().__init__(msg)
        self.factors = factors


class NotSymmetric(VtpmdError, ValueError):
    pass


class NotPositiveDefinite(VtpmdError, ArithmeticError):
    pass


class ConvergenceFailure(VtpmdError, ArithmeticError):
    pass


class RankTooLarge(VtpmdError, ValueError):
    pass


class RankTooSmall(VtpmdError, ValueError):
    pass


class NotSupported(VtpmdError):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class MethodUnsupported(VtpmdError, ValueError):
    pass


class EmptyScores(VtpmdError, ValueError):
    pass


class InconsistentThreshold(VtpmdError, ValueError):
    pass


class ShapeInconsistency(VtpmdError, ValueError):
    pass


class DivergenceDetected(VtpmdError, ArithmeticError):
    pass


# container / dataset errors
class BadMagic(VtpmdError):
    pass


class UnsupportedVersion(VtpmdError):
    pass


class CorruptTensor(VtpmdError):
    pass


class DuplicateName(VtpmdError):
    pass


class BadRecordSize(VtpmdError):
    pass


class LabelOutOfRange(VtpmdError):
    pass
