"""Exception hierarchy shared by every streamnet module."""

from __future__ import annotations


class StreamNetError(Exception):
    """Base class for all streamnet failures."""


class InvalidInput(StreamNetError, ValueError):
    pass


class DimensionMismatch(StreamNetError, ValueError):
    pass


class NonFiniteValue(StreamNetError, ArithmeticError):
    """A NaN or infinity appeared in an input, a parameter or an intermediate.

    When raised from :func:`streamnet.executor.run_stream` the ``summary``
    attribute carries the :class:`RunSummary` up to the last good state.
    """

    def __init__(self, message: str, summary=None):
        super().__init__(message)
        self.summary = summary


class LambdaOutOfRange(StreamNetError, ValueError):
    pass


class InvalidSpec(StreamNetError, ValueError):
    pass


class InvalidActivation(StreamNetError, ValueError):
    pass


class UnboundedActivation(StreamNetError, ValueError):
    pass


class DegenerateInput(StreamNetError, ValueError):
    pass


class LagOutOfRange(StreamNetError, ValueError):
    pass


class EmptyTrajectory(StreamNetError, ValueError):
    pass


class SourceError(StreamNetError):
    pass


class IoError(SourceError):
    pass


class ParseError(SourceError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class StreamMisuse(SourceError):
    """Raised by the consumption guard when a drained source keeps being polled."""


class SnapshotError(StreamNetError):
    pass


class DigestMismatch(SnapshotError):
    pass


class VersionUnsupported(SnapshotError):
    pass


class CorruptSnapshot(SnapshotError):
    pass


class ConfigError(StreamNetError, ValueError):
    pass
