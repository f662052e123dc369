"""Exception hierarchy shared across the package."""


class CcalignError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CcalignError):
    """An input violates a documented precondition or invariant."""


class FormatError(CcalignError):
    """A binary or JSON artifact does not match its documented layout."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """File declares a format version this build cannot read."""


class UnsupportedDtypeError(FormatError):
    """File declares an unknown element dtype code."""


class TruncatedFileError(FormatError):
    """File ends before the payload its header declares."""


class TrainingDivergedError(CcalignError):
    """Probe training produced a non-finite loss."""
