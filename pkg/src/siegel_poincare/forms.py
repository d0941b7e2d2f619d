"""Positive definite half-integral binary forms.

A form is stored as the integer triple ``(a, b, c)`` standing for the
symmetric matrix ``[[a, b/2], [b/2, c]]``, i.e. the quadratic form
``a x^2 + b x y + c y^2``.  Keeping ``b`` doubled makes every operation
exact.  Unimodular changes of variable act by ``F -> tU F U``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Tuple

import mpmath

from ._intlinalg import IntMat, matmul, transpose

__all__ = [
    "InvalidFormError",
    "HalfIntegralForm",
    "UnimodularMatrix",
    "FormClassData",
    "reduce",
    "is_equivalent",
    "automorphisms",
    "eigenvalue_bounds",
    "representations",
]


class InvalidFormError(ValueError):
    """Raised for triples that do not describe a positive definite form."""


@dataclass(frozen=True)
class UnimodularMatrix:
    """Integer 2x2 matrix ``[[a, b], [c, d]]`` with determinant +1 or -1."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if self.a * self.d - self.b * self.c not in (1, -1):
            raise ValueError(f"{self.rows} is not unimodular")

    @classmethod
    def identity(cls) -> "UnimodularMatrix":
        return cls(1, 0, 0, 1)

    @classmethod
    def from_rows(cls, rows) -> "UnimodularMatrix":
        (a, b), (c, d) = rows
        return cls(int(a), int(b), int(c), int(d))

    @property
    def rows(self) -> IntMat:
        return ((self.a, self.b), (self.c, self.d))

    @property
    def det(self) -> int:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other: "UnimodularMatrix") -> "UnimodularMatrix":
        return UnimodularMatrix.from_rows(matmul(self.rows, other.rows))

    def inverse(self) -> "UnimodularMatrix":
        e = self.det
        return UnimodularMatrix(e * self.d, -e * self.b, -e * self.c, e * self.a)

    def transpose(self) -> "UnimodularMatrix":
        return UnimodularMatrix(self.a, self.c, self.b, self.d)

    def __neg__(self) -> "UnimodularMatrix":
        return UnimodularMatrix(-self.a, -self.b, -self.c, -self.d)


@dataclass(frozen=True, order=True)
class HalfIntegralForm:
    """The matrix ``[[a, b/2], [b/2, c]]``; must be positive definite."""

    a: int
    b: int
    c: int

    def __post_init__(self):
        for name in ("a", "b", "c"):
            if not isinstance(getattr(self, name), int) or isinstance(getattr(self, name), bool):
                raise InvalidFormError(f"entry {name}={getattr(self, name)!r} is not an integer")
        if self.a < 1 or self.c < 1 or 4 * self.a * self.c - self.b * self.b <= 0:
            raise InvalidFormError(f"({self.a}, {self.b}, {self.c}) is not positive definite")

    @classmethod
    def scalar(cls, n: int) -> "HalfIntegralForm":
        """``n I_2``."""
        return cls(n, 0, n)

    @classmethod
    def diagonal(cls, p: int, q: int) -> "HalfIntegralForm":
        return cls(p, 0, q)

    @classmethod
    def parse(cls, text: str) -> "HalfIntegralForm":
        """Parse ``"a,b,c"`` (``b`` is twice the off-diagonal entry)."""
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 3:
            raise InvalidFormError(f"expected three comma separated integers, got {text!r}")
        try:
            a, b, c = (int(p) for p in parts)
        except ValueError:
            raise InvalidFormError(f"non-integer entry in {text!r}") from None
        return cls(a, b, c)

    @classmethod
    def from_json(cls, obj: Dict[str, int]) -> "HalfIntegralForm":
        return cls(int(obj["a"]), int(obj["b"]), int(obj["c"]))

    def to_json(self) -> Dict[str, int]:
        return {"a": self.a, "b": self.b, "c": self.c}

    def __str__(self) -> str:
        return f"{self.a},{self.b},{self.c}"

    @property
    def disc(self) -> int:
        """``4ac - b^2 = 4 det``; a positive integer."""
        return 4 * self.a * self.c - self.b * self.b

    @property
    def det(self) -> Fraction:
        return Fraction(self.disc, 4)

    @property
    def trace(self) -> int:
        return self.a + self.c

    def doubled(self) -> IntMat:
        """The even integral matrix ``2F``."""
        return ((2 * self.a, self.b), (self.b, 2 * self.c))

    def matrix(self) -> Tuple[Tuple[Fraction, Fraction], Tuple[Fraction, Fraction]]:
        h = Fraction(self.b, 2)
        return ((Fraction(self.a), h), (h, Fraction(self.c)))

    def value(self, x: int, y: int) -> int:
        """``F[(x, y)] = a x^2 + b x y + c y^2``."""
        return self.a * x * x + self.b * x * y + self.c * y * y

    def transform(self, U) -> "HalfIntegralForm":
        """``tU F U`` for any integral 2x2 ``U`` (rows or UnimodularMatrix)."""
        rows = U.rows if isinstance(U, UnimodularMatrix) else U
        M = matmul(matmul(transpose(rows), self.doubled()), rows)
        return HalfIntegralForm(M[0][0] // 2, M[0][1], M[1][1] // 2)

    def scaled(self, n: int) -> "HalfIntegralForm":
        return HalfIntegralForm(n * self.a, n * self.b, n * self.c)

    def is_reduced(self) -> bool:
        a, b, c = self.a, self.b, self.c
        if not (abs(b) <= a <= c):
            return False
        if (abs(b) == a or a == c) and b < 0:
            return False
        return True


@dataclass(frozen=True)
class FormClassData:
    """A reduced form together with ``U`` such that ``tU original U == reduced``."""

    reduced: HalfIntegralForm
    transform: UnimodularMatrix


_SWAP = UnimodularMatrix(0, -1, 1, 0)


def _translation(t: int) -> UnimodularMatrix:
    return UnimodularMatrix(1, t, 0, 1)


def reduce(form: HalfIntegralForm) -> FormClassData:
    """Gauss reduction under SL2(Z).

    The result satisfies ``|b| <= a <= c`` with ``b >= 0`` whenever
    ``|b| == a`` or ``a == c``.  Every step is a determinant-one change of
    variables, so the witness lies in SL2(Z).
    """
    if not isinstance(form, HalfIntegralForm):
        raise InvalidFormError(f"expected HalfIntegralForm, got {type(form).__name__}")
    f = form
    U = UnimodularMatrix.identity()
    while True:
        # bring b into (-a, a]
        if not (-f.a < f.b <= f.a):
            t = (f.a - f.b) // (2 * f.a)
            step = _translation(t)
            f, U = f.transform(step), U @ step
        if f.a > f.c or (f.a == f.c and f.b < 0):
            f, U = f.transform(_SWAP), U @ _SWAP
            continue
        break
    return FormClassData(f, U)


_MIRROR = UnimodularMatrix(1, 0, 0, -1)


def is_equivalent(q: HalfIntegralForm, t: HalfIntegralForm) -> Optional[UnimodularMatrix]:
    """Return ``U`` in GL2(Z) with ``tU q U == t``, or ``None``.

    Equivalence is over GL2(Z), so besides comparing SL2-reduced forms the
    mirror image ``(a, -b, c)`` of ``q`` is tried as well.
    """
    if q.disc != t.disc:
        return None
    rt = reduce(t)
    for pre in (UnimodularMatrix.identity(), _MIRROR):
        rq = reduce(q.transform(pre))
        if rq.reduced == rt.reduced:
            U = pre @ rq.transform @ rt.transform.inverse()
            if q.transform(U) != t:  # pragma: no cover - guarded by construction
                raise ArithmeticError("equivalence witness failed verification")
            return U
    return None


def representations(form: HalfIntegralForm, n: int, primitive: bool = False) -> List[Tuple[int, int]]:
    """All integer ``(x, y)`` with ``form[(x, y)] == n`` (sorted).

    The search window ``x^2 <= 4cn/disc`` and ``y^2 <= 4an/disc`` follows from
    completing the square, so the list is complete.
    """
    if n <= 0:
        return []
    a, b, c = form.a, form.b, form.c
    D = form.disc
    out = []
    xmax = math.isqrt(4 * c * n // D)
    for x in range(-xmax, xmax + 1):
        # c y^2 + b x y + (a x^2 - n) = 0
        disc = (b * x) ** 2 - 4 * c * (a * x * x - n)
        if disc < 0:
            continue
        r = math.isqrt(disc)
        if r * r != disc:
            continue
        for num in {-b * x + r, -b * x - r}:
            if num % (2 * c) == 0:
                y = num // (2 * c)
                if primitive and math.gcd(x, y) != 1:
                    continue
                out.append((x, y))
    return sorted(out)


def automorphisms(t: HalfIntegralForm) -> List[UnimodularMatrix]:
    """The finite group ``{U in GL2(Z) : tU t U = t}``, sorted.

    The columns of an automorphism represent ``a`` and ``c`` respectively, so
    they are drawn from the complete finite representation lists.
    """
    firsts = representations(t, t.a)
    seconds = representations(t, t.c)
    out = []
    for (x1, y1) in firsts:
        for (x2, y2) in seconds:
            if x1 * y2 - x2 * y1 not in (1, -1):
                continue
            # bilinear pairing 2 * u1^t T u2 must reproduce b
            if 2 * t.a * x1 * x2 + t.b * (x1 * y2 + y1 * x2) + 2 * t.c * y1 * y2 != t.b:
                continue
            out.append(UnimodularMatrix(x1, x2, y1, y2))
    return sorted(out, key=lambda U: U.rows)


def eigenvalue_bounds(t: HalfIntegralForm, bits: int = 128) -> Tuple[mpmath.mpf, mpmath.mpf]:
    """Eigenvalues ``(lambda_min, lambda_max)`` of ``[[a, b/2], [b/2, c]]``.

    ``lambda_max`` comes from the quadratic formula without cancellation and
    ``lambda_min = det / lambda_max``, so both carry full relative accuracy.
    """
    with mpmath.workprec(bits):
        tr = mpmath.mpf(t.trace)
        det = mpmath.mpf(t.disc) / 4
        root = mpmath.sqrt(mpmath.mpf((t.a - t.c) ** 2 + t.b * t.b))
        lmax = (tr + root) / 2
        lmin = det / lmax
        return +lmin, +lmax


def iter_forms(max_entry: int) -> Iterator[HalfIntegralForm]:
    """All positive definite triples with entries bounded by ``max_entry``."""
    for a in range(1, max_entry + 1):
        for c in range(1, max_entry + 1):
            for b in range(-max_entry, max_entry + 1):
                if 4 * a * c - b * b > 0:
                    yield HalfIntegralForm(a, b, c)

