"""Exception hierarchy shared by all nilutkit modules.

Each class carries an ``exit_code`` so the command-line front end can map
failures onto its documented process exit codes without a lookup table.
"""

from __future__ import annotations


class NilutError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class UsageError(NilutError):
    exit_code = 2


class InputFormatError(NilutError):
    exit_code = 3


# colorlib
class InvalidColor(InputFormatError):
    pass


class ShapeMismatch(UsageError):
    pass


# lut3d
class CubeParseError(InputFormatError):
    """Raised for malformed ``.cube`` text; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MissingSize(CubeParseError):
    pass


class RowCountMismatch(CubeParseError):
    pass


class MalformedRow(CubeParseError):
    pass


class SizeOutOfRange(CubeParseError):
    pass


class Lut1dUnsupported(CubeParseError):
    pass


class InvalidBits(UsageError):
    pass


class CountMismatch(InputFormatError):
    pass


class UnknownStyle(UsageError):
    pass


# neuralut
class NonFinite(NilutError):
    exit_code = 4


class MissingCondition(UsageError):
    pass


class UnexpectedCondition(UsageError):
    pass


# fitting
class Diverged(NilutError):
    exit_code = 4

    def __init__(self, message: str, last_stable_step: int):
        super().__init__(f"{message} (last stable step {last_stable_step})")
        self.last_stable_step = last_stable_step


class StyleCountMismatch(UsageError):
    pass


class EmptyCorpus(UsageError):
    pass


class NonConvexWeights(UsageError):
    pass


# imagepipe
class UnsupportedFormat(InputFormatError):
    pass


class CorruptData(InputFormatError):
    pass


# model files
class ModelFileError(InputFormatError):
    pass


class BadMagic(ModelFileError):
    pass


class VersionUnsupported(ModelFileError):
    pass


class LengthMismatch(ModelFileError):
    pass
