"""Exception types raised across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class InsufficientDataError(ValueError):
    """Too few users (or observations) to compute the requested quantity."""


class InconsistencyError(ValueError):
    """Inputs contradict each other, e.g. a universe missing observed users."""


class ParseError(ValueError):
    """A malformed row in an event log. Carries the 1-based line number."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line
