"""Exception types shared across the package."""

from __future__ import annotations


class DimensionError(ValueError):
    """A vector or matrix is empty, non-finite, or shaped inconsistently."""


class LabelError(ValueError):
    """A class label lies outside the valid range 0..K-1."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent with the rest of the setup."""


class TrainingError(RuntimeError):
    """Training cannot continue, e.g. gradients became non-finite."""


class ParseError(ValueError):
    """An input file could not be parsed; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(ParseError):
    """A parsed file violates the expected column layout."""
