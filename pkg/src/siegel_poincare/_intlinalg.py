"""Small exact integer linear algebra used by the forms and Kloosterman code.

Matrices are tuples of row tuples of Python ints.  Everything here is exact
and intended for tiny sizes (2x2, 4x2, 4x4), so clarity beats speed.
"""

from __future__ import annotations

import math
from typing import List, Sequence, Tuple

IntMat = Tuple[Tuple[int, ...], ...]


def xgcd(a: int, b: int) -> Tuple[int, int, int]:
    """Return ``(g, x, y)`` with ``x*a + y*b == g == gcd(a, b) >= 0``."""
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, r = divmod(a, b)
        a, b = b, r
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    if a < 0:
        return -a, -x0, -y0
    return a, x0, y0


def freeze(rows: Sequence[Sequence[int]]) -> IntMat:
    return tuple(tuple(int(v) for v in row) for row in rows)


def identity(n: int) -> IntMat:
    return tuple(tuple(int(i == j) for j in range(n)) for i in range(n))


def matmul(A: Sequence[Sequence[int]], B: Sequence[Sequence[int]]) -> IntMat:
    cols = list(zip(*B))
    return tuple(tuple(sum(x * y for x, y in zip(row, col)) for col in cols) for row in A)


def transpose(A: Sequence[Sequence[int]]) -> IntMat:
    return tuple(zip(*A))


def det2(A: Sequence[Sequence[int]]) -> int:
    return A[0][0] * A[1][1] - A[0][1] * A[1][0]


def adj2(A: Sequence[Sequence[int]]) -> IntMat:
    """Adjugate, so that ``A @ adj2(A) == det2(A) * I``."""
    return ((A[1][1], -A[0][1]), (-A[1][0], A[0][0]))


def inv_unimodular2(A: Sequence[Sequence[int]]) -> IntMat:
    d = det2(A)
    if d not in (1, -1):
        raise ValueError(f"matrix {A} is not unimodular (det={d})")
    return tuple(tuple(d * v for v in row) for row in adj2(A))


def smith_normal_form(M: Sequence[Sequence[int]]) -> Tuple[IntMat, IntMat, IntMat]:
    """Smith normal form with transforms.

    Returns ``(S, L, R)`` with ``L @ M @ R == S``, ``L`` and ``R`` unimodular
    and ``S`` diagonal with non-negative entries ``s_1 | s_2 | ...``.
    """
    A = [list(r) for r in M]
    m, n = len(A), len(A[0])
    L = [list(r) for r in identity(m)]
    R = [list(r) for r in identity(n)]

    def rowop(X, i, j, a, b, c, d):
        ri, rj = X[i], X[j]
        X[i] = [a * x + b * y for x, y in zip(ri, rj)]
        X[j] = [c * x + d * y for x, y in zip(ri, rj)]

    def colop(X, i, j, a, b, c, d):
        for r in X:
            x, y = r[i], r[j]
            r[i] = a * x + b * y
            r[j] = c * x + d * y

    t = 0
    while t < min(m, n):
        nonzero = [(abs(A[i][j]), i, j) for i in range(t, m) for j in range(t, n) if A[i][j]]
        if not nonzero:
            break
        _, pi, pj = min(nonzero)
        A[t], A[pi] = A[pi], A[t]
        L[t], L[pi] = L[pi], L[t]
        for r in A:
            r[t], r[pj] = r[pj], r[t]
        for r in R:
            r[t], r[pj] = r[pj], r[t]
        while True:
            changed = False
            for i in range(t + 1, m):
                if A[i][t]:
                    if A[i][t] % A[t][t] == 0:
                        q = A[i][t] // A[t][t]
                        rowop(A, t, i, 1, 0, -q, 1)
                        rowop(L, t, i, 1, 0, -q, 1)
                    else:
                        _, x, y = xgcd(A[t][t], A[i][t])
                        g = math.gcd(A[t][t], A[i][t])
                        a, b = A[t][t] // g, A[i][t] // g
                        rowop(A, t, i, x, y, -b, a)
                        rowop(L, t, i, x, y, -b, a)
                    changed = True
            for j in range(t + 1, n):
                if A[t][j]:
                    if A[t][j] % A[t][t] == 0:
                        q = A[t][j] // A[t][t]
                        colop(A, t, j, 1, 0, -q, 1)
                        colop(R, t, j, 1, 0, -q, 1)
                    else:
                        _, x, y = xgcd(A[t][t], A[t][j])
                        g = math.gcd(A[t][t], A[t][j])
                        a, b = A[t][t] // g, A[t][j] // g
                        colop(A, t, j, x, y, -b, a)
                        colop(R, t, j, x, y, -b, a)
                    changed = True
            if changed:
                continue
            bad = [i for i in range(t + 1, m) for j in range(t + 1, n) if A[i][j] % A[t][t]]
            if not bad:
                break
            i = bad[0]
            A[t] = [x + y for x, y in zip(A[t], A[i])]
            L[t] = [x + y for x, y in zip(L[t], L[i])]
        if A[t][t] < 0:
            A[t] = [-x for x in A[t]]
            L[t] = [-x for x in L[t]]
        t += 1
    return freeze(A), freeze(L), freeze(R)


def smith2(C: Sequence[Sequence[int]]) -> Tuple[int, int, IntMat, IntMat]:
    """Factor a nonsingular 2x2 ``C = U1 @ diag(c1, c2) @ U2`` with ``c1 | c2``.

    ``U1`` and ``U2`` are unimodular, ``c1 >= 1`` and ``c2`` carries the sign
    of ``det C`` only through the transforms (``c1, c2 > 0``).
    """
    S, L, R = smith_normal_form(C)
    c1, c2 = S[0][0], S[1][1]
    if c1 == 0 or c2 == 0:
        raise ValueError("singular matrix has no invertible Smith factorization")
    return c1, c2, inv_unimodular2(L), inv_unimodular2(R)


def minors_gcd(rows: Sequence[Sequence[int]]) -> int:
    """gcd of all maximal minors of a 2 x n integer matrix."""
    r0, r1 = rows
    g = 0
    n = len(r0)
    for i in range(n):
        for j in range(i + 1, n):
            g = math.gcd(g, r0[i] * r1[j] - r0[j] * r1[i])
    return g


J4: IntMat = ((0, 0, 1, 0), (0, 0, 0, 1), (-1, 0, 0, 0), (0, -1, 0, 0))


def complete_symplectic(C: Sequence[Sequence[int]], D: Sequence[Sequence[int]]) -> Tuple[IntMat, IntMat]:
    """Find integral ``(A, B)`` so that ``[[A, B], [C, D]]`` lies in Sp4(Z).

    Requires ``C tD`` symmetric and the 2x4 block ``(C D)`` primitive.  The
    construction: the columns of ``J t(C D)`` span a primitive rank-2 lattice,
    so a Smith decomposition provides integral ``X`` with ``X J t(C D) = I``.
    The rows of ``X`` then pair correctly with the bottom block, and one
    correction ``X + Y (C D)`` with ``Y`` strictly upper triangular kills the
    remaining symplectic defect.
    """
    bottom = (tuple(C[0]) + tuple(D[0]), tuple(C[1]) + tuple(D[1]))
    if minors_gcd(bottom) != 1:
        raise ValueError("bottom block (C D) is not primitive")
    if matmul(C, transpose(D)) != transpose(matmul(C, transpose(D))):
        raise ValueError("C tD is not symmetric")
    M = matmul(J4, transpose(bottom))
    S, L, R = smith_normal_form(M)
    X = matmul(matmul(R, ((1, 0, 0, 0), (0, 1, 0, 0))), L)
    N = matmul(matmul(X, J4), transpose(X))
    n = N[0][1]
    top = tuple(
        tuple(X[i][j] + (n * bottom[1][j] if i == 0 else 0) for j in range(4)) for i in range(2)
    )
    g = top + bottom
    if matmul(matmul(g, J4), transpose(g)) != J4:
        raise ArithmeticError("symplectic completion failed")  # pragma: no cover
    A = tuple(r[:2] for r in top)
    B = tuple(r[2:] for r in top)
    return A, B


def primitive_completion(x: int, y: int) -> IntMat:
    """Unimodular ``[[p, q], [x, y]]`` of determinant 1 with bottom row ``(x, y)``.

    Uses the extended Euclid coefficients, then shifts the top row by a
    multiple of the bottom row to make it as short as possible.
    """
    g, s, t = xgcd(x, y)
    if g != 1:
        raise ValueError(f"row ({x}, {y}) is not primitive")
    p, q = t, -s  # p*y - q*x == t*y + s*x == 1
    norm = x * x + y * y
    m = (2 * (p * x + q * y) + norm) // (2 * norm)
    p, q = p - m * x, q - m * y
    return ((p, q), (x, y))

