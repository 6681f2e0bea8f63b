"""Exception hierarchy.

Every error raised on bad input derives from :class:`EmotiveError`, which is
also a :class:`ValueError` so callers that only care about invalid values can
catch that instead.
"""


class EmotiveError(ValueError):
    """Base class for domain errors."""


class MalformedRecord(EmotiveError):
    def __init__(self, row, message="malformed record"):
        self.row = row
        super().__init__(f"row {row}: {message}")


class OutOfBounds(EmotiveError):
    pass


class NonMonotonicTime(EmotiveError):
    pass


class PointBehindCamera(EmotiveError):
    pass


class NonPositiveSigma(EmotiveError):
    pass


class BadAnchorCount(EmotiveError):
    pass


class WrongInteriorCount(EmotiveError):
    pass


class UnsortedInterior(EmotiveError):
    pass


class IndexOutOfRange(EmotiveError):
    pass


class TooFewBlocks(EmotiveError):
    pass


class ShapeMismatch(EmotiveError):
    pass


class FewerThanTwoBlocks(EmotiveError):
    pass


class LevelMismatch(EmotiveError):
    pass


class EmptyTimestamps(EmotiveError):
    pass


class NonPositiveDepth(EmotiveError):
    pass


class EmptyValidMask(EmotiveError):
    pass


class GridTooShort(EmotiveError):
    pass


class SingularSystem(EmotiveError):
    pass
