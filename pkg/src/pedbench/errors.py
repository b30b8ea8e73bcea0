"""Exception and warning types shared across the package."""


class PedbenchError(Exception):
    """Base class for all benchmark errors."""


class TooFewSamples(PedbenchError):
    """An operation received fewer samples or points than it requires."""


class NonMonotonicTimestamps(PedbenchError):
    """Track timestamps are not strictly increasing."""


class BehindCamera(PedbenchError):
    """A 3D point has non-positive depth in the camera frame."""


class FullyBehindCamera(PedbenchError):
    """All corners of a 3D box have non-positive depth."""


class DegenerateBox(PedbenchError):
    """A pixel box with zero width and zero height cannot be expanded."""


class MalformedRecord(PedbenchError):
    """A serialized record could not be parsed.

    Carries the 1-based line number of the offending record.
    """

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class HorizonExceedsFuture(PedbenchError):
    """A requested evaluation horizon is longer than the predicted future."""


class SingularCovariance(PedbenchError):
    """A covariance matrix is not positive definite even after regularization."""


class TooFewInstances(PedbenchError):
    """Covariance calibration requires more validation instances."""


class InvalidScript(PedbenchError):
    """A synthetic behavior script violates its constraints."""


class PredictionValidationError(PedbenchError):
    """An externally supplied prediction set failed validation."""


class InsufficientRemainderWarning(UserWarning):
    """The unflagged pool is smaller than the flagged count; all of it is used."""
