"""Number handling shared by every module.

Two number modes exist.  ``rational`` keeps everything as
:class:`fractions.Fraction`; ``float`` uses plain floats and compares with a
small tolerance.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Union

Number = Union[Fraction, float, int]

RATIONAL = "rational"
FLOAT = "float"
MODES = (RATIONAL, FLOAT)

FLOAT_EPS = 1e-12
FIXED_POINT_TOL = 1e-9
DETECT_EPS_FLOAT = 1e-9


def parse_number(value: object, mode: str = RATIONAL) -> Number:
    """Parse ``"p/q"``, decimal strings and numbers into the mode's type.

    Decimal strings such as ``"0.1"`` are read exactly in rational mode.
    """
    if mode not in MODES:
        raise ValueError(f"unknown number mode {mode!r}")
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, str):
        text = value.strip()
        try:
            q = Fraction(text)
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"not a rational number: {value!r}") from None
    elif isinstance(value, (int, Fraction)):
        q = Fraction(value)
    elif isinstance(value, float):
        if mode == FLOAT:
            return value
        # Floats in a rational config are read by their shortest decimal repr.
        q = Fraction(repr(value))
    else:
        raise ValueError(f"not a number: {value!r}")
    return q if mode == RATIONAL else float(q)


def convert(value: Number, mode: str) -> Number:
    if mode == RATIONAL:
        return value if isinstance(value, Fraction) else Fraction(value)
    return float(value)


def mode_of(*values: Number) -> str:
    return FLOAT if any(isinstance(v, float) for v in values) else RATIONAL


def is_exact(value: Number) -> bool:
    return isinstance(value, (Fraction, int))


def close(a: Number, b: Number, tol: float = FLOAT_EPS) -> bool:
    """Exact equality for rationals, absolute tolerance once a float is involved."""
    if is_exact(a) and is_exact(b):
        return a == b
    return abs(float(a) - float(b)) <= tol


def fmt(value: Number) -> str:
    """Serialize a number: rationals as ``p/q`` (or ``p``), floats as decimals."""
    if isinstance(value, float):
        return repr(value)
    q = Fraction(value)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def to_jsonable(value):
    """Recursively replace numbers by their serialized form."""
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (Fraction, float)):
        return fmt(value)
    if isinstance(value, int):
        return value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value
