"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: validation problems exit 2, I/O
problems exit 3 and non-finite numerics exit 4.
"""


class ValidationError(ValueError):
    """Invalid argument, shape mismatch or violated precondition."""


class DegenerateError(ValidationError):
    """Input is well-formed but degenerate (zero bandwidth, all-zero scores)."""


class SizeError(ValidationError):
    """Problem exceeds a configured size guard."""


class FormatError(ValidationError):
    """A file has the wrong magic number or layout."""


class ConsistencyError(ValidationError):
    """Two inputs that must agree do not (e.g. image and label counts)."""


class TruncatedFileError(OSError):
    """A binary file ended before its header said it would."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where a finite one is required."""
