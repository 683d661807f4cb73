"""Exception types raised by the toolkit."""


class DlamError(Exception):
    """Base class for all toolkit errors."""


class InputError(DlamError, ValueError):
    """Malformed input data: non-finite entries, shape mismatches, empty sequences."""


class ArgumentError(DlamError, ValueError):
    """A scalar argument is out of its admissible range."""


class ConfigError(DlamError, ValueError):
    """A solver configuration violates its invariants."""


class NumericalError(DlamError, ArithmeticError):
    """An iteration produced non-finite values or hit a degenerate factorization."""


class FormatError(DlamError, ValueError):
    """A binary file (PGM or .dlm) is malformed.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class FrameReadError(DlamError, OSError):
    """An image file could not be read or decoded."""
