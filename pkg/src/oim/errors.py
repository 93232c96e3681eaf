"""Semantic exception hierarchy with stable CLI exit codes.

Every public function raises subclasses of :class:`OimError` rather than bare
builtins, so callers (and the CLI) can map failures to the four error classes:
configuration (2), data (3), numeric (4), and I/O (5).
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5


class OimError(Exception):
    """Base class for all package errors."""

    exit_code = EXIT_CONFIG


class ConfigError(OimError):
    """Malformed or inconsistent configuration (bad key, bad value, unknown name)."""

    exit_code = EXIT_CONFIG


class UsageError(OimError):
    """API contract violation: wrong argument combination or call order."""

    exit_code = EXIT_CONFIG


class DataError(OimError):
    """Problems with dataset content or shape."""

    exit_code = EXIT_DATA


class SchemaError(DataError):
    """Dataset does not match the declared schema (missing/extra columns)."""


class ParseError(DataError):
    """A cell could not be parsed; carries the offending row index."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class EmptyDatasetError(DataError):
    """Zero-row dataset where at least one row is required."""


class DegenerateProtectedError(DataError):
    """Protected column has fewer than two observed levels."""


class DegenerateGroupError(DataError):
    """A protected group is missing a label class required by the operation."""


class FamilyError(DataError):
    """Loss or link incompatible with the outcome family."""


class NumericError(OimError):
    """Numerical failure during fitting or evaluation."""

    exit_code = EXIT_NUMERIC


class RankDeficiencyError(NumericError):
    """Singular design matrix; suggests adding ridge jitter."""


class TrainingDivergenceError(NumericError):
    """Training loss became non-finite; carries the epoch index."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code contract."""
    if isinstance(exc, OimError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    return 1
