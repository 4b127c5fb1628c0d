"""Shared exception types."""

from __future__ import annotations


class CsvParseError(ValueError):
    """A CSV cell could not be parsed; carries the offending row and column."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class IntegrityError(ValueError):
    """Dataset-level consistency violation (duplicate ids, bad schema)."""


class DegenerateFeatureError(ValueError):
    """A feature column is constant and cannot be standard-scaled."""

    def __init__(self, message: str, column: str | int | None = None):
        super().__init__(message)
        self.column = column


class DegenerateLabelsError(ValueError):
    """Classification requested with only one class present."""


class InfeasibleSpaceError(ValueError):
    """Constraints reject nearly every sample; carries the acceptance rate."""

    def __init__(self, message: str, acceptance_rate: float | None = None):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate


class ConditioningError(RuntimeError):
    """Cholesky factorization failed even after jitter escalation."""
