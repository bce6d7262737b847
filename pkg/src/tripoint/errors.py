"""Exception hierarchy shared by every tripoint module."""


class TripointError(Exception):
    """Base class for all library errors."""


class EmptyCloud(TripointError, ValueError):
    pass


class DegenerateExtent(TripointError, ValueError):
    pass


class BadCount(TripointError, ValueError):
    pass


class TooFewPoints(TripointError, ValueError):
    pass


class NotNormalized(TripointError, ValueError):
    pass


class BadThreshold(TripointError, ValueError):
    pass


class EmptyReferenceSet(TripointError, ValueError):
    pass


class ShapeMismatch(TripointError, ValueError):
    pass


class AxisOutOfRange(TripointError, IndexError):
    pass


class NotScalarLoss(TripointError, ValueError):
    pass


class MissingGrad(TripointError, RuntimeError):
    pass


class ConfigMismatch(TripointError, ValueError):
    pass


class FormatError(TripointError, ValueError):
    """Raised when a binary or text file does not match its declared layout."""


class DegenerateOcclusion(TripointError, ValueError):
    pass


class NonFiniteLoss(TripointError, FloatingPointError):
    pass


class MissingPair(TripointError, FileNotFoundError):
    pass


class UnreadableFile(TripointError, OSError):
    pass
