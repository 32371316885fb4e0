"""Exception types raised across the toolkit."""


class ClicError(Exception):
    """Base class for all toolkit errors."""


class DecodeError(ClicError):
    pass


class OutOfBounds(ClicError, ValueError):
    pass


class InvalidC(ClicError, ValueError):
    pass


class ImageTooSmall(ClicError, ValueError):
    pass


class ShapeMismatch(ClicError, ValueError):
    pass


class NormalizationDegenerate(ClicError, ArithmeticError):
    pass


class EmptyQueue(ClicError, ValueError):
    pass


class EmptyPositives(ClicError, ValueError):
    pass


class BatchSizeMismatch(ClicError, ValueError):
    pass


class DegenerateVariance(ClicError, ArithmeticError):
    pass


class EmptyDataset(ClicError, ValueError):
    pass


class InsufficientData(ClicError, ValueError):
    pass


class UnknownScorer(ClicError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown scorer"


class BadThresholds(ClicError, ValueError):
    pass
