"""Exception types raised across the package."""


class WVAError(Exception):
    """Base class for all package errors."""


class OverlapZero(WVAError, ValueError):
    """Pre- and post-selected states are (numerically) orthogonal."""


class NonPositiveWidth(WVAError, ValueError):
    pass


class ZeroPostselection(WVAError, ValueError):
    pass


class LossyFlipUnsupported(WVAError, ValueError):
    pass


class EmptyProfile(WVAError, ValueError):
    pass


class InvalidConfig(WVAError, ValueError):
    pass


class FormatError(WVAError, ValueError):
    """Corrupt time-tag file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyTagSet(WVAError, ValueError):
    pass


class FrequencyUnresolvable(WVAError, ValueError):
    pass


class OffsetsOutOfBand(WVAError, ValueError):
    pass


class MismatchedSweeps(WVAError, ValueError):
    pass
