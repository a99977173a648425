"""Exception hierarchy; each class carries the CLI exit code it maps to."""
from __future__ import annotations

__all__ = ["BlowupLabError", "ConfigError", "DataRangeError", "BracketError", "BudgetExhausted"]


class BlowupLabError(Exception):
    exit_code = 1

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code,
                "details": self.details}


class ConfigError(BlowupLabError, ValueError):
    """Malformed or inconsistent configuration."""

    exit_code = 2


class DataRangeError(BlowupLabError, ValueError):
    """A request falls outside the data a trajectory covers."""

    exit_code = 3


class BracketError(BlowupLabError, ValueError):
    """A bisection bracket cannot be formed or kept consistent."""

    exit_code = 4


class BudgetExhausted(BlowupLabError, RuntimeError):
    """The run budget ran out; ``details`` holds the partial result."""

    exit_code = 5
