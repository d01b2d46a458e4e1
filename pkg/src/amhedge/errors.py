"""Shared exception types, aligned with the CLI exit codes."""
from __future__ import annotations


class ModelFormatError(ValueError):
    """Malformed model file or inconsistent model data (CLI exit 4)."""


class CapExceededError(RuntimeError):
    """An enumeration exceeded its configured cap (CLI exit 3)."""

    def __init__(self, what: str, count: int, cap: int):
        super().__init__(f"{what} needs {count} items, cap is {cap}")
        self.what = what
        self.count = count
        self.cap = cap


class SnaFailure(RuntimeError):
    """Pricing rejected because no-arbitrage fails (CLI exit 2).

    Carries whatever certificate made the failure evident: an unbounded
    improvement ray of the hedging LP, or an infeasibility certificate of
    the measure polytope.
    """

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class PropertyViolation(AssertionError):
    """An internal invariant failed on concrete data (CLI exit 5)."""
