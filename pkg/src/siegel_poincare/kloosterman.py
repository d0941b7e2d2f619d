"""Symplectic Kloosterman sums K(Q, T; C) and the rank-one sums H^{+-}(P, S; c).

Conventions
-----------
For a nonsingular integral ``C`` the double cosets with lower-left block
``C`` are parametrised by ``S = C^{-1} D`` modulo integral symmetric
matrices, subject to ``(C D)`` being primitive.  The top-left block only
matters through ``R = A C^{-1}``, which is symmetric and determined modulo
integral symmetric matrices once ``(C D)`` is fixed; since ``Q`` and ``T``
are half-integral, ``Tr(X Q)`` is an integer for integral symmetric ``X`` and
the summand ``e(Tr(R Q + S T))`` is well defined.

Fast path: write ``C = U1 diag(c1, c2) U2`` (Smith form, ``c1 | c2``).  The
block-diagonal symplectic matrices built from ``U1`` and ``U2`` carry the
representatives of ``diag(c1, c2)`` to those of ``C`` and replace ``Q`` by
``U1^{-1} Q tU1^{-1}`` and ``T`` by ``tU2^{-1} T U2^{-1}``.  For the diagonal
block all phases share the denominator ``c2``, so a sum is a histogram of
integer numerators modulo ``c2`` contracted against roots of unity.

Every phase is an exact rational number; only the final contraction with
``e(j/n)`` is done in floating point, at the requested precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import mpmath
import numpy as np

from ._intlinalg import (
    IntMat,
    adj2,
    complete_symplectic,
    det2,
    inv_unimodular2,
    matmul,
    minors_gcd,
    smith2,
    transpose,
)
from .forms import HalfIntegralForm

__all__ = [
    "IntegerMatrix2",
    "CosetRep",
    "ExpSumValue",
    "enumerate_coset_reps",
    "symplectic_kloosterman",
    "kloosterman_histogram",
    "h_sum",
    "h_sum_histogram",
    "bruteforce_coset_data",
    "bruteforce_kloosterman",
    "cyclotomic_sum",
    "summand_phase",
    "SingularMatrixError",
    "DEFAULT_BITS",
]

DEFAULT_BITS = 128


class SingularMatrixError(ValueError):
    """Raised when a block ``C`` with zero determinant is supplied."""


@dataclass(frozen=True)
class IntegerMatrix2:
    """Integral 2x2 matrix ``[[a, b], [c, d]]``."""

    a: int
    b: int
    c: int
    d: int

    @classmethod
    def from_rows(cls, rows) -> "IntegerMatrix2":
        (a, b), (c, d) = rows
        return cls(int(a), int(b), int(c), int(d))

    @classmethod
    def parse(cls, text: str) -> "IntegerMatrix2":
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 4:
            raise ValueError(f"expected four comma separated integers, got {text!r}")
        return cls(*(int(p) for p in parts))

    @property
    def rows(self) -> IntMat:
        return ((self.a, self.b), (self.c, self.d))

    @property
    def det(self) -> int:
        return self.a * self.d - self.b * self.c

    def require_invertible(self) -> "IntegerMatrix2":
        if self.det == 0:
            raise SingularMatrixError(f"C = {self.rows} is singular")
        return self

    def to_json(self) -> List[List[int]]:
        return [list(r) for r in self.rows]


def _as_matrix(C) -> IntegerMatrix2:
    if isinstance(C, IntegerMatrix2):
        return C
    return IntegerMatrix2.from_rows(C)


@dataclass(frozen=True)
class CosetRep:
    """One double coset representative ``(A, D)``; ``C`` is held by the caller."""

    A: IntegerMatrix2
    D: IntegerMatrix2


@dataclass(frozen=True)
class ExpSumValue:
    """A finite exponential sum: its complex value and number of terms."""

    value: mpmath.mpc
    term_count: int

    def to_json(self, digits: int = 30) -> Dict[str, object]:
        return {
            "re": mpmath.nstr(self.value.real, digits),
            "im": mpmath.nstr(self.value.imag, digits),
            "terms": int(self.term_count),
        }


# ---------------------------------------------------------------------------
# roots of unity


@lru_cache(maxsize=4096)
def _roots(n: int, bits: int) -> Tuple[Tuple[mpmath.mpf, ...], Tuple[mpmath.mpf, ...]]:
    with mpmath.workprec(bits + 16):
        cos = tuple(mpmath.cospi(mpmath.mpf(2 * j) / n) for j in range(n))
        sin = tuple(mpmath.sinpi(mpmath.mpf(2 * j) / n) for j in range(n))
    return cos, sin


def cyclotomic_sum(hist: Sequence[int], n: int, bits: int = DEFAULT_BITS) -> mpmath.mpc:
    """``sum_j hist[j] e(j/n)`` evaluated at ``bits`` of precision."""
    cos, sin = _roots(n, bits)
    idx = np.nonzero(np.asarray(hist))[0]
    with mpmath.workprec(bits + 16):
        re = mpmath.fsum(int(hist[j]) * cos[j] for j in idx)
        im = mpmath.fsum(int(hist[j]) * sin[j] for j in idx)
    with mpmath.workprec(bits):
        return mpmath.mpc(+re, +im)


def _phase(num: int, den: int, bits: int) -> mpmath.mpc:
    """``e(num/den)`` for an exact rational phase."""
    with mpmath.workprec(bits + 16):
        x = mpmath.mpf(2 * (num % den)) / den
        return mpmath.mpc(mpmath.cospi(x), mpmath.sinpi(x))


# ---------------------------------------------------------------------------
# enumeration of X(C)


@lru_cache(maxsize=None)
def _diagonal_reps(c1: int, c2: int) -> Tuple[np.ndarray, np.ndarray, Tuple[Tuple[IntMat, IntMat], ...]]:
    """Representatives for ``C0 = diag(c1, c2)`` with ``c1 | c2``.

    Returns ``(Rnum, Snum, blocks)``.  Row ``i`` of ``Rnum`` holds the
    numerators ``(r11, r12, r22)`` of the symmetric ``R = A C0^{-1}`` over the
    common denominator ``c2``, so ``Tr(R Q) = Rnum[i] . (a, b, c) / c2`` for
    ``Q = (a, b, c)``.  ``Snum`` does the same for ``S = C0^{-1} D`` and
    ``blocks`` lists the integral ``(A, D)`` pairs.
    """
    m = c2 // c1
    rnum, snum, blocks = [], [], []
    C0 = ((c1, 0), (0, c2))
    if c1 == 1:
        # S = diag(0, x3/c2); R = diag(0, x3^{-1}/c2) completes it.
        for x3 in range(c2):
            if math.gcd(x3, c2) != 1:
                continue
            xinv = pow(x3, -1, c2) if c2 > 1 else 0
            rnum.append((0, 0, xinv))
            snum.append((0, 0, x3))
            blocks.append((((0, 0), (0, xinv)), ((0, 0), (0, x3))))
    else:
        for x1 in range(c1):
            for x2 in range(c1):
                for x3 in range(c2):
                    D0 = ((x1, x2), (m * x2, x3))
                    if minors_gcd((C0[0] + D0[0], C0[1] + D0[1])) != 1:
                        continue
                    A0, _ = complete_symplectic(C0, D0)
                    # R = A0 C0^{-1}; numerators over c2
                    r11, r12, r21, r22 = A0[0][0] * m, A0[0][1], A0[1][0] * m, A0[1][1]
                    if r12 != r21:  # pragma: no cover - symplectic identity
                        raise ArithmeticError("A C^{-1} is not symmetric")
                    rnum.append((r11 % c2, r12 % c2, r22 % c2))
                    snum.append((x1 * m, x2 * m, x3))
                    blocks.append((A0, D0))
    R = np.array(rnum, dtype=np.int64).reshape(-1, 3)
    S = np.array(snum, dtype=np.int64).reshape(-1, 3)
    return R, S, tuple(blocks)


def _smith_data(C: IntegerMatrix2):
    C.require_invertible()
    return smith2(C.rows)


def enumerate_coset_reps(C) -> List[CosetRep]:
    """A complete, irredundant list of ``(A, D)`` with lower-left block ``C``."""
    C = _as_matrix(C).require_invertible()
    c1, c2, U1, U2 = _smith_data(C)
    _, _, blocks = _diagonal_reps(c1, c2)
    tU1inv = transpose(inv_unimodular2(U1))
    tU2inv = transpose(inv_unimodular2(U2))
    reps = []
    for A0, D0 in blocks:
        A = matmul(matmul(tU1inv, A0), U2)
        D = matmul(matmul(U1, D0), tU2inv)
        reps.append(CosetRep(IntegerMatrix2.from_rows(A), IntegerMatrix2.from_rows(D)))
    return reps


def _transported_forms(Q: HalfIntegralForm, T: HalfIntegralForm, U1, U2):
    Qt = Q.transform(transpose(inv_unimodular2(U1)))
    Tt = T.transform(inv_unimodular2(U2))
    return Qt, Tt


@lru_cache(maxsize=200_000)
def _diag_histogram(c1: int, c2: int, q: Tuple[int, int, int], t: Tuple[int, int, int]) -> np.ndarray:
    R, S, _ = _diagonal_reps(c1, c2)
    if len(R) == 0:
        return np.zeros(c2, dtype=np.int64)
    N = (R @ np.array(q, dtype=np.int64) + S @ np.array(t, dtype=np.int64)) % c2
    return np.bincount(N, minlength=c2)


def kloosterman_histogram(Q: HalfIntegralForm, T: HalfIntegralForm, C) -> Tuple[np.ndarray, int]:
    """Exact phase distribution of ``K(Q, T; C)``.

    Returns ``(hist, n)`` with ``K = sum_j hist[j] e(j/n)``; ``n`` is the
    larger Smith invariant ``c2`` of ``C``.
    """
    C = _as_matrix(C).require_invertible()
    c1, c2, U1, U2 = _smith_data(C)
    Qt, Tt = _transported_forms(Q, T, U1, U2)
    q = (Qt.a % c2, Qt.b % c2, Qt.c % c2)
    t = (Tt.a % c2, Tt.b % c2, Tt.c % c2)
    return _diag_histogram(c1, c2, q, t), c2


def symplectic_kloosterman(
    Q: HalfIntegralForm, T: HalfIntegralForm, C, bits: int = DEFAULT_BITS
) -> ExpSumValue:
    """``K(Q, T; C) = sum over X(C) of e(Tr(A C^{-1} Q + C^{-1} D T))``."""
    hist, n = kloosterman_histogram(Q, T, C)
    return ExpSumValue(cyclotomic_sum(hist, n, bits), int(hist.sum()))


def summand_phase(Q: HalfIntegralForm, T: HalfIntegralForm, C, rep: CosetRep):
    """Exact phase ``Tr(A C^{-1} Q + C^{-1} D T)`` modulo 1, as a Fraction.

    Works for any representative, including ones shifted by the two-sided
    action, which is how the well-definedness property is tested.
    """
    from fractions import Fraction

    C = _as_matrix(C).require_invertible()
    d = C.det
    adj = adj2(C.rows)
    Rn = matmul(rep.A.rows, adj)  # d * A C^{-1}
    Sn = matmul(adj, rep.D.rows)  # d * C^{-1} D
    q2, t2 = Q.doubled(), T.doubled()
    # Tr(X F) with F = doubled/2
    num = sum(Rn[i][j] * q2[j][i] for i in range(2) for j in range(2))
    num += sum(Sn[i][j] * t2[j][i] for i in range(2) for j in range(2))
    return Fraction(num, 2 * d) % 1


# ---------------------------------------------------------------------------
# brute-force oracle


@dataclass(frozen=True)
class BruteForceCosetData:
    """Output of the brute-force search for ``X(C)``.

    ``r_num`` and ``s_num`` hold numerators of ``R`` and ``S`` over
    ``den = |det C|`` as ``(x11, x12, x22)``; ``reps`` the integral blocks.
    """

    den: int
    r_num: np.ndarray
    s_num: np.ndarray
    reps: Tuple[CosetRep, ...]


@lru_cache(maxsize=None)
def _bruteforce_cached(rows: IntMat) -> BruteForceCosetData:
    C = rows
    det = det2(C)
    d = abs(det)
    sign = 1 if det > 0 else -1
    adjC = adj2(C)
    grid = np.array(
        [(x, y, z) for x in range(d) for y in range(d) for z in range(d)], dtype=np.int64
    )  # numerators of a symmetric matrix over d

    def mul_sym_right(M, G):
        """Rows of ``M @ [[g0, g1], [g1, g2]]`` flattened (4 columns)."""
        g0, g1, g2 = G[:, 0], G[:, 1], G[:, 2]
        return np.stack(
            [
                M[0][0] * g0 + M[0][1] * g1,
                M[0][0] * g1 + M[0][1] * g2,
                M[1][0] * g0 + M[1][1] * g1,
                M[1][0] * g1 + M[1][1] * g2,
            ],
            axis=1,
        )

    def mul_sym_left(G, M):
        g0, g1, g2 = G[:, 0], G[:, 1], G[:, 2]
        return np.stack(
            [
                g0 * M[0][0] + g1 * M[1][0],
                g0 * M[0][1] + g1 * M[1][1],
                g1 * M[0][0] + g2 * M[1][0],
                g1 * M[0][1] + g2 * M[1][1],
            ],
            axis=1,
        )

    # D = C S must be integral: C @ N ≡ 0 (mod d)
    CD = mul_sym_right(C, grid)
    ok = np.all(CD % d == 0, axis=1)
    r_list, s_list, reps = [], [], []
    # t(C^{-1}) * d = sign * t(adj C)
    tadj_scaled = [[sign * adjC[j][i] for j in range(2)] for i in range(2)]
    # candidate R: A = R C integral
    RC = mul_sym_left(grid, C)
    okR = np.all(RC % d == 0, axis=1)
    Rcand = grid[okR]
    for idx in np.nonzero(ok)[0]:
        D = (CD[idx] // d).reshape(2, 2)
        Dt = tuple(tuple(int(v) for v in row) for row in D)
        if minors_gcd((tuple(C[0]) + Dt[0], tuple(C[1]) + Dt[1])) != 1:
            continue
        # B = R D - tC^{-1} integral:  Rnum @ D - d tC^{-1} ≡ 0 (mod d)
        RD = mul_sym_left(Rcand, Dt)
        target = np.array([tadj_scaled[0][0], tadj_scaled[0][1], tadj_scaled[1][0], tadj_scaled[1][1]])
        good = np.all((RD - target) % d == 0, axis=1)
        hits = np.nonzero(good)[0]
        if len(hits) != 1:
            raise ArithmeticError(
                f"expected a unique R modulo Sym(Z) for D={Dt}, found {len(hits)}"
            )
        rn = Rcand[hits[0]]
        A = (RC[okR][hits[0]] // d).reshape(2, 2)
        At = tuple(tuple(int(v) for v in row) for row in A)
        B = ((RD[hits[0]] - target) // d).reshape(2, 2)
        g = tuple(At[i] + tuple(int(v) for v in B[i]) for i in range(2)) + tuple(
            tuple(C[i]) + Dt[i] for i in range(2)
        )
        J = ((0, 0, 1, 0), (0, 0, 0, 1), (-1, 0, 0, 0), (0, -1, 0, 0))
        if matmul(matmul(g, J), transpose(g)) != J:
            raise ArithmeticError(f"brute-force completion of D={Dt} is not symplectic")
        r_list.append(tuple(int(v) for v in rn))
        s_list.append(tuple(int(v) for v in grid[idx]))
        reps.append(CosetRep(IntegerMatrix2.from_rows(At), IntegerMatrix2.from_rows(Dt)))
    return BruteForceCosetData(
        d,
        np.array(r_list, dtype=np.int64).reshape(-1, 3),
        np.array(s_list, dtype=np.int64).reshape(-1, 3),
        tuple(reps),
    )


def bruteforce_coset_data(C) -> BruteForceCosetData:
    """Slow, Smith-free search for ``X(C)``; intended as a test oracle.

    Scans every symmetric ``S`` with denominators dividing ``|det C|``
    modulo integral symmetric matrices, keeps ``D = C S`` when integral with
    ``(C D)`` primitive, then scans symmetric ``R`` for an integral ``A = R C``
    and ``B = R D - tC^{-1}`` and checks the completed 4x4 matrix is symplectic.
    """
    C = _as_matrix(C).require_invertible()
    return _bruteforce_cached(C.rows)


def bruteforce_histogram(Q: HalfIntegralForm, T: HalfIntegralForm, C) -> Tuple[np.ndarray, int]:
    """Phase histogram of ``K(Q, T; C)`` over the denominator ``|det C|``."""
    data = bruteforce_coset_data(C)
    d = data.den
    if len(data.r_num) == 0:
        return np.zeros(d, dtype=np.int64), d
    qv = np.array([Q.a, Q.b, Q.c], dtype=np.int64)
    tv = np.array([T.a, T.b, T.c], dtype=np.int64)
    # Tr(R Q) = (r11 a + r12 b + r22 c)/d for R = [[r11, r12], [r12, r22]]/d
    N = (data.r_num @ qv + data.s_num @ tv) % d
    return np.bincount(N, minlength=d), d


def bruteforce_kloosterman(
    Q: HalfIntegralForm, T: HalfIntegralForm, C, bits: int = DEFAULT_BITS
) -> ExpSumValue:
    hist, d = bruteforce_histogram(Q, T, C)
    return ExpSumValue(cyclotomic_sum(hist, d, bits), int(hist.sum()))


# ---------------------------------------------------------------------------
# H^{+-}(P, S; c)


def h_sum_histogram(P: HalfIntegralForm, S: HalfIntegralForm, c: int, sign: int):
    """Exact data for ``H^{sign}(P, S; c)``.

    Returns ``(hist, extra_num, extra_den)`` with
    ``H = e(extra_num/extra_den) * sum_j hist[j] e(j/c)``, or ``None`` when
    the Kronecker delta on the lower-right entries vanishes.
    """
    if c < 1:
        raise ValueError("c must be a positive integer")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    p1, p2, p4 = P.a, P.b, P.c
    s1, s2, s4 = S.a, S.b, S.c
    if p4 != s4:
        return None
    d2 = np.arange(c, dtype=np.int64)
    hist = np.zeros(c, dtype=np.int64)
    quad = (s4 * d2 * d2) % c
    lin_s = (s2 * d2) % c
    lin_p = (p2 * d2) % c
    for d1 in range(c):
        if math.gcd(d1, c) != 1:
            continue
        inv = pow(d1, -1, c) if c > 1 else 0
        N = (inv * quad - sign * inv * lin_p + lin_s + inv * p1 + d1 * s1) % c
        hist += np.bincount(N, minlength=c)
    return hist, -sign * p2 * s2, 2 * c * s4


def h_sum(
    P: HalfIntegralForm, S: HalfIntegralForm, c: int, sign: int, bits: int = DEFAULT_BITS
) -> ExpSumValue:
    """``H^{sign}(P, S; c)`` by the literal double sum over ``d1`` (units) and ``d2``."""
    data = h_sum_histogram(P, S, c, sign)
    if data is None:
        return ExpSumValue(mpmath.mpc(0), 0)
    hist, num, den = data
    with mpmath.workprec(bits):
        value = cyclotomic_sum(hist, c, bits) * _phase(num, den, bits)
    return ExpSumValue(value, int(hist.sum()))
