"""Continued fractions and bounded rational-approximation tests.

Irrationality cannot be decided from a float.  The working definition here
is: ``x`` is treated as irrational when no fraction ``p/q`` with
``1 <= q <= max_denominator`` satisfies ``|q*x - p| < tol``.  Every verdict
carries the bounds that produced it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

DEFAULT_MAX_DENOMINATOR = 10**6
DEFAULT_TOL = 1e-12


def continued_fraction(x: float, depth: int = 50) -> list[int]:
    """Partial quotients of ``x`` (exact expansion of the binary float)."""
    if not math.isfinite(x):
        raise ValueError("continued_fraction needs a finite number")
    frac = Fraction(x)
    terms: list[int] = []
    for _ in range(depth):
        a = math.floor(frac)
        terms.append(a)
        rem = frac - a
        if rem == 0:
            break
        frac = 1 / rem
    return terms


def convergents(terms: list[int]) -> list[Fraction]:
    p0, q0, p1, q1 = 1, 0, terms[0], 1
    out = [Fraction(p1, q1)]
    for a in terms[1:]:
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        out.append(Fraction(p1, q1))
    return out


@dataclass(frozen=True)
class RationalityCertificate:
    value: float
    irrational: bool
    max_denominator: int
    tol: float
    witness: Fraction | None = None
    residual: float | None = None
    partial_quotients: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "irrational": self.irrational,
            "max_denominator": self.max_denominator,
            "tol": self.tol,
            "witness": None if self.witness is None else [self.witness.numerator, self.witness.denominator],
            "residual": self.residual,
            "partial_quotients": list(self.partial_quotients[:12]),
        }


def rational_approximation(x: float, max_denominator: int = DEFAULT_MAX_DENOMINATOR,
                           tol: float = DEFAULT_TOL, depth: int = 50) -> RationalityCertificate:
    """Look for ``p/q`` with ``q <= max_denominator`` and ``|q*x - p| < tol``.

    The minimum of ``|q*x - p|`` over ``q <= Q`` is attained at a convergent,
    so scanning convergents is exhaustive.  Residuals are evaluated exactly on
    the binary value of ``x``.
    """
    terms = continued_fraction(x, depth)
    exact = Fraction(x)
    best: Fraction | None = None
    best_res = math.inf
    for conv in convergents(terms):
        if conv.denominator > max_denominator:
            break
        res = float(abs(conv.denominator * exact - conv.numerator))
        if res < best_res:
            best, best_res = conv, res
    irrational = not best_res < tol
    return RationalityCertificate(x, irrational, max_denominator, tol,
                                  None if irrational else best, best_res, tuple(terms))


def is_irrational(x: float, max_denominator: int = DEFAULT_MAX_DENOMINATOR,
                  tol: float = DEFAULT_TOL) -> bool:
    return rational_approximation(x, max_denominator, tol).irrational
