"""Exact rational scalar used across the package.

Every price, payoff, probability and LP coefficient is an exact rational.
gmpy2's mpq is preferred (its arithmetic is several times faster than the
stdlib); fractions.Fraction is a drop-in fallback.  Floats are rejected at
the parsing boundary so no binary rounding can leak in.
"""
from __future__ import annotations

from typing import Any

try:
    from gmpy2 import mpq as _mpq

    Q = _mpq
    GMPY2 = True
except ImportError:  # pragma: no cover - exercised only without gmpy2
    from fractions import Fraction as _Fraction

    Q = _Fraction
    GMPY2 = False

ZERO = Q(0)
ONE = Q(1)


def rat(value: Any) -> Q:
    """Coerce an int, 'p/q' string or rational to the package scalar.

    Floats are refused: they carry binary rounding and would silently
    break the exactness guarantees.
    """
    if isinstance(value, float):
        raise TypeError(f"refusing float {value!r}; pass an int or 'p/q' string")
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Q(value)
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            num, den = text.split("/", 1)
            d = int(den)
            if d == 0:
                raise ValueError(f"zero denominator in {value!r}")
            return Q(int(num), d)
        return Q(int(text))
    # already a rational (mpq or Fraction)
    if hasattr(value, "numerator") and hasattr(value, "denominator"):
        return Q(value.numerator, value.denominator)
    raise TypeError(f"cannot interpret {value!r} as a rational")


def rat_str(value: Any) -> str:
    """Canonical 'p/q' form with positive denominator, used in all reports."""
    q = rat(value)
    return f"{q.numerator}/{q.denominator}"
