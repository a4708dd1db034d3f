"""Exception types shared across the toolkit."""

from __future__ import annotations


class QboostError(Exception):
    """Base class for toolkit errors."""


class DataError(QboostError):
    """Malformed or inconsistent input data.

    ``line`` carries the 1-based line number when the problem was found
    while parsing a file.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(QboostError):
    """A numerical procedure failed (singular system, non-finite values)."""
