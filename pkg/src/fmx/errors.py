"""Exception hierarchy shared by all fmx modules.

Every error raised by the library is an ``FmxError`` subclass so callers
(and the CLI) can separate library failures from programming errors.
"""

from __future__ import annotations

__all__ = [
    "FmxError",
    "ValidationError",
    "DimensionMismatchError",
    "EmptyInputError",
    "ParameterRangeError",
    "UnknownMaskIdError",
    "MappingError",
    "EmptySupervisionError",
    "DecodeError",
    "BadMagicError",
    "VersionMismatchError",
    "ChecksumError",
    "TruncatedStreamError",
]


class FmxError(Exception):
    """Base class for all fmx errors."""


class ValidationError(FmxError):
    """A value violates one or more type invariants.

    ``violations`` lists one human-readable string per violated invariant.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DimensionMismatchError(FmxError):
    """Operands that must share a shape or frame size do not."""


class EmptyInputError(FmxError):
    """An operation that needs at least one element got none."""


class ParameterRangeError(FmxError):
    """A scalar parameter (proportion, tau, ...) is outside its legal range."""


class UnknownMaskIdError(FmxError):
    """A mask id is not present in the mask pack."""


class MappingError(FmxError):
    """A class-mapping table is malformed or inconsistent with its inputs."""


class EmptySupervisionError(FmxError):
    """Every position is ignored; the requested statistic is undefined."""


class DecodeError(FmxError):
    """A byte stream cannot be decoded as an .fmx container."""


class BadMagicError(DecodeError):
    """The stream does not start with a known container magic."""


class VersionMismatchError(DecodeError):
    """The container version byte is not supported."""


class ChecksumError(DecodeError):
    """The payload checksum does not match the trailing CRC32."""


class TruncatedStreamError(DecodeError):
    """The stream ended before the declared payload and checksum."""
