"""Working-precision helpers built on gmpy2's MPFR floats.

Every high-precision computation in the package runs inside a
``working_digits(d)`` block; gmpy2 rounds each result to the precision of
the active context, so mixed-precision operands are rounded to the current
working precision.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from fractions import Fraction
from typing import Iterator

import gmpy2
from gmpy2 import mpfr

LOG2_10 = math.log2(10)
GUARD_BITS = 8


def digits_to_bits(digits: int) -> int:
    return int(math.ceil(digits * LOG2_10)) + GUARD_BITS


def current_digits() -> int:
    return int((gmpy2.get_context().precision - GUARD_BITS) / LOG2_10)


@contextmanager
def working_digits(digits: int) -> Iterator[None]:
    if digits < 16:
        raise ValueError(f"precision must be at least 16 digits, got {digits}")
    with gmpy2.context(gmpy2.get_context(), precision=digits_to_bits(digits)):
        yield


def mp(value) -> mpfr:
    """Convert ``value`` to an mpfr at the current working precision.

    Strings are parsed in decimal, Fractions are divided exactly at working
    precision, and existing mpfr values are re-rounded.
    """
    if isinstance(value, Fraction):
        return mpfr(value.numerator) / value.denominator
    if isinstance(value, str):
        value = value.strip()
        if "/" in value:
            return mp(Fraction(value))
        return mpfr(value)
    return mpfr(value) if not isinstance(value, float) else mpfr(repr(value))


def to_decimal(x, digits: int) -> str:
    """Format ``x`` with ``digits`` significant decimal digits.

    The result always parses back through :func:`mp`.
    """
    if not isinstance(x, mpfr):
        x = mpfr(x)
    if gmpy2.is_zero(x):
        return "0"
    if not gmpy2.is_finite(x):
        return str(x)
    mantissa, exponent, _ = x.digits(10, digits)
    sign = ""
    if mantissa.startswith("-"):
        sign, mantissa = "-", mantissa[1:]
    return f"{sign}0.{mantissa}e{exponent}"


def pow10(exponent: int) -> mpfr:
    return mpfr(10) ** exponent


def log10_abs(x) -> float:
    """log10|x| as a float (``-inf`` for zero); safe for huge exponents."""
    x = mpfr(x)
    if gmpy2.is_zero(x):
        return float("-inf")
    return float(gmpy2.log10(abs(x)))


def matching_digits(a, b) -> int:
    """Number of leading significant decimal digits on which ``a`` and ``b`` agree."""
    a, b = mpfr(a), mpfr(b)
    if a == b:
        return current_digits()
    scale = max(abs(a), abs(b))
    if gmpy2.is_zero(scale):
        return current_digits()
    rel = abs(a - b) / scale
    return max(0, int(math.floor(-log10_abs(rel))))
