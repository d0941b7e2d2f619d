"""Independent oracle for the Jacobi cusp forms of index 1 at weights 10 and 12.

The coefficients are produced from product and divisor-sum expansions in
exact rational arithmetic, with no reference to the package.  They feed a
Maass lift whose coefficients must be proportional to Poincare series
coefficients at weights where the cusp space is one-dimensional.
"""

import math
from collections import defaultdict
from fractions import Fraction


def _mul(A, B, nmax):
    out = defaultdict(Fraction)
    for (n1, r1), v1 in A.items():
        for (n2, r2), v2 in B.items():
            if n1 + n2 <= nmax:
                out[(n1 + n2, r1 + r2)] += v1 * v2
    return {key: v for key, v in out.items() if v}


def _product_part(nmax):
    """``q prod (1 - q^n)^20 (1 - z q^n)^2 (1 - q^n / z)^2``, truncated in ``q``."""
    P = {(1, 0): Fraction(1)}
    for n in range(1, nmax + 1):
        for _ in range(20):
            P = _mul(P, {(0, 0): Fraction(1), (n, 0): Fraction(-1)}, nmax)
        for _ in range(2):
            P = _mul(P, {(0, 0): Fraction(1), (n, 1): Fraction(-1)}, nmax)
            P = _mul(P, {(0, 0): Fraction(1), (n, -1): Fraction(-1)}, nmax)
    return P


def _by_discriminant(phi):
    out = {}
    for (n, r), v in phi.items():
        N = 4 * n - r * r
        if N in out and out[N] != v:
            raise AssertionError(f"coefficient not a function of the discriminant at N={N}")
        out[N] = v
    return out


def jacobi_coefficients(nmax=12):
    """Return ``{10: c10, 12: 12*c12}`` as dictionaries ``N -> coefficient``.

    Only discriminants ``N <= 4*nmax - 1`` are complete.
    """
    prod = _product_part(nmax)
    phi10 = _mul(prod, {(0, 1): Fraction(1), (0, 0): Fraction(-2), (0, -1): Fraction(1)}, nmax)
    # 12 * wp(tau, z) / (2 pi i)^2 expansion times (zeta - 2 + 1/zeta), written via divisor sums
    series = {(0, 0): Fraction(1, 12)}
    for n in range(1, nmax + 1):
        for d in range(1, n + 1):
            if n % d == 0:
                series[(n, d)] = series.get((n, d), 0) + d
                series[(n, -d)] = series.get((n, -d), 0) + d
                series[(n, 0)] = series.get((n, 0), 0) - 2 * d
    phi12 = _mul(phi10, series, nmax)
    for key, v in prod.items():
        phi12[key] = phi12.get(key, 0) + v
    top = 4 * nmax - 1
    c10 = {N: v for N, v in _by_discriminant(phi10).items() if 0 < N <= top}
    c12 = {N: 12 * v for N, v in _by_discriminant(phi12).items() if 0 < N <= top}
    return {10: c10, 12: c12}


def lift_coefficient(coeffs, k, a, b, c):
    """Maass lift coefficient at the form ``(a, b, c)`` from ``N -> c(N)``."""
    g = math.gcd(math.gcd(a, b), c)
    total = Fraction(0)
    for d in range(1, g + 1):
        if g % d == 0:
            total += d ** (k - 1) * coeffs.get((4 * a * c - b * b) // (d * d), 0)
    return total
