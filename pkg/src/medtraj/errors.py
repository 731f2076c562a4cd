"""Exception types shared across the pipeline."""

from __future__ import annotations


class MedtrajError(Exception):
    """Base class for all package errors."""


class ValidationError(MedtrajError):
    """Input failed a contract check.

    Carries the full list of violations so callers can report every
    problem at once instead of fixing them one by one.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ParseError(ValidationError):
    """A CSV input file could not be parsed; messages carry line numbers."""
