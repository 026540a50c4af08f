"""Exception types shared across the toolkit."""


class SalienceError(Exception):
    """Base class for toolkit errors."""


class DataError(SalienceError):
    """Malformed input data or a violated document/model invariant."""


class ModelFormatError(DataError):
    """Model file is missing, has the wrong version, or the wrong type."""


class NumericError(SalienceError):
    """A NaN or Inf showed up where finite numbers are required."""
