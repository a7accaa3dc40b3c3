"""Exact scalar coefficients: rationals and Gaussian rationals.

Coefficients in the term language are Gaussian rationals (a pair of
exact rationals for the real and imaginary part).  Nothing in the AST
ever stores a float; conversion to complex happens only at evaluation
time.

Textual forms (single token, no spaces):

    3         -5/2        integer or rational (real part only)
    2i        -1/3i       purely imaginary
    1/2+3i    1/2-2/3i    full Gaussian rational
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

_RAT = r"-?\d+(?:/\d+)?"
_RAT_RE = re.compile(rf"^{_RAT}$")
_IMAG_RE = re.compile(rf"^({_RAT})i$")
_FULL_RE = re.compile(rf"^({_RAT})([+-]\d+(?:/\d+)?)i$")


def parse_rational(text: str) -> Fraction:
    """Parse `p` or `p/q` into an exact Fraction."""
    if not _RAT_RE.match(text):
        raise ValueError(f"not a rational literal: {text!r}")
    return Fraction(text)


def format_rational(q: Fraction) -> str:
    """Canonical text for a rational: `p` when the denominator is 1, else `p/q`."""
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class QComplex:
    """A Gaussian rational re + im*i with exact Fraction parts."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "re", Fraction(self.re))
        object.__setattr__(self, "im", Fraction(self.im))

    @staticmethod
    def parse(text: str) -> "QComplex":
        m = _FULL_RE.match(text)
        if m:
            return QComplex(Fraction(m.group(1)), Fraction(m.group(2)))
        m = _IMAG_RE.match(text)
        if m:
            return QComplex(Fraction(0), Fraction(m.group(1)))
        if _RAT_RE.match(text):
            return QComplex(Fraction(text), Fraction(0))
        raise ValueError(f"not a scalar literal: {text!r}")

    def format(self) -> str:
        if self.im == 0:
            return format_rational(self.re)
        if self.re == 0:
            return format_rational(self.im) + "i"
        sign = "+" if self.im > 0 else "-"
        return f"{format_rational(self.re)}{sign}{format_rational(abs(self.im))}i"

    def __complex__(self) -> complex:
        return complex(float(self.re), float(self.im))

    def __add__(self, other: "QComplex") -> "QComplex":
        return QComplex(self.re + other.re, self.im + other.im)

    def __mul__(self, other: "QComplex") -> "QComplex":
        return QComplex(self.re * other.re - self.im * other.im,
                        self.re * other.im + self.im * other.re)

    def conjugate(self) -> "QComplex":
        return QComplex(self.re, -self.im)

    def abs_bound(self) -> Fraction:
        """Exact rational upper bound on the modulus: |re| + |im|."""
        return abs(self.re) + abs(self.im)

    @property
    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0


QC_ZERO = QComplex(Fraction(0), Fraction(0))
QC_ONE = QComplex(Fraction(1), Fraction(0))
QC_MINUS_I = QComplex(Fraction(0), Fraction(-1))
