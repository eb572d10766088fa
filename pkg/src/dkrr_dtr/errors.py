"""Exception types shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, NumericalError -> 3,
I/O errors (OSError) -> 4.
"""


class DkrrDtrError(Exception):
    """Base class for package errors."""


class InputError(DkrrDtrError, ValueError):
    """Malformed operation inputs (dimension mismatch, empty action set, ...)."""


class ConfigError(DkrrDtrError, ValueError):
    """Invalid experiment configuration or config file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(DkrrDtrError, ArithmeticError):
    """Linear solver failed even after the jitter fallback."""


class DataError(DkrrDtrError, ValueError):
    """Training data cannot support the requested fit (e.g. an action is
    missing from a worker's subset under a separate-models feature case)."""
