"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class DegenerateBatch(InvalidArgument):
    """Batch statistics are undefined (a single sample per channel)."""


class DegenerateReference(InvalidArgument):
    """A reference image has zero norm, so a relative error is undefined."""


class UnsupportedSize(InvalidArgument):
    """Grid dimensions not handled by the transform."""


class NumericFault(ArithmeticError):
    """A NaN or infinity appeared where finite values are required."""


class FormatError(ValueError):
    """A file does not follow the expected binary layout."""


class CorruptionError(FormatError):
    """A file is truncated or its checksum does not match."""
