"""Half-integer order Bessel functions and the integral J-cal_l.

Two independent evaluation paths are provided for ``J_l(x)``:

* the ascending power series, summed in fixed-point integer arithmetic with
  guard bits chosen adaptively from the observed cancellation;
* a downward three-term recurrence ``J_{v-1} = (2v/x) J_v - J_{v+1}`` started
  from series values at an order ``N`` above both ``l`` and ``x``.

``bessel_j`` uses the series for ``x <= l`` and the recurrence otherwise.
The integral

    J-cal_l(s1, s2) = int_0^{pi/2} J_l(4 pi s1 sin t) J_l(4 pi s2 sin t) sin t dt

is computed with Gauss-Legendre rules of doubling size until two successive
levels agree to the requested absolute tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Tuple, Union

import mpmath
import numpy as np
from mpmath.libmp import to_fixed

__all__ = [
    "BesselOrder",
    "PrecisionContext",
    "QuadratureError",
    "QuadratureResult",
    "bessel_j",
    "bessel_j_series",
    "bessel_j_recurrence",
    "bessel_bound",
    "bessel_power_bound",
    "jj_integral",
    "jj_integral_with_error",
    "jj_error_sequence",
    "gauss_legendre",
    "STANDARD_GRID_ORDERS",
    "STANDARD_GRID_POINTS",
]

Real = Union[int, float, str, Fraction, mpmath.mpf]

STANDARD_GRID_ORDERS = (Fraction(9, 2), Fraction(17, 2), Fraction(25, 2), Fraction(37, 2), Fraction(77, 2))
STANDARD_GRID_POINTS = ("0.1", "1", "5", "20", "60", "100")


class QuadratureError(ArithmeticError):
    """Node doubling did not reach the requested tolerance."""


@dataclass(frozen=True)
class BesselOrder:
    """A positive half-integer order ``l``, stored exactly as the odd integer ``2l``.

    Orders attached to weights satisfy ``l = k - 3/2`` with ``k >= 6`` even;
    smaller odd ``2l`` are accepted so the closed-form checks at ``l = 1/2``
    can use the same code path.
    """

    two_l: int

    def __post_init__(self):
        if not isinstance(self.two_l, int) or self.two_l < 1 or self.two_l % 2 == 0:
            raise ValueError(f"2l must be an odd positive integer, got {self.two_l!r}")

    @classmethod
    def from_weight(cls, k: int) -> "BesselOrder":
        if k % 2 or k < 6:
            raise ValueError(f"weight must be even and >= 6, got {k}")
        return cls(2 * k - 3)

    @classmethod
    def of(cls, l) -> "BesselOrder":
        """Coerce ``BesselOrder``, Fraction, float or string such as ``"8.5"``."""
        if isinstance(l, BesselOrder):
            return l
        two = Fraction(str(l)) * 2 if not isinstance(l, Fraction) else 2 * l
        if two.denominator != 1:
            raise ValueError(f"order {l} is not a half-integer")
        return cls(int(two))

    @property
    def l(self) -> Fraction:
        return Fraction(self.two_l, 2)

    @property
    def is_weight_order(self) -> bool:
        return self.two_l >= 9 and (self.two_l + 3) % 4 == 0

    def mpf(self) -> mpmath.mpf:
        return mpmath.mpf(self.two_l) / 2

    def __str__(self) -> str:
        return f"{self.two_l}/2"


@dataclass(frozen=True)
class PrecisionContext:
    """Working precision and quadrature controls.

    ``quad_nodes`` is the size of the first Gauss-Legendre level,
    ``tail_target`` the absolute tolerance for node-doubling agreement and
    ``max_doublings`` the number of doublings allowed before giving up.
    """

    bits: int = 128
    quad_nodes: int = 16
    tail_target: float = 1e-30
    max_doublings: int = 8

    def __post_init__(self):
        if self.bits < 64:
            raise ValueError("bits must be at least 64")
        if self.quad_nodes < 16:
            raise ValueError("quad_nodes must be at least 16")
        if not self.tail_target > 0:
            raise ValueError("tail_target must be positive")

    @classmethod
    def for_weight(cls, k: int, bits: Optional[int] = None, **kw) -> "PrecisionContext":
        """Default context for weight ``k``; precision grows for ``k > 30``."""
        if bits is None:
            bits = 128 if k <= 30 else 128 + 8 * (k - 30)
        return cls(bits=bits, **kw)

    @property
    def floor(self) -> float:
        """Size of relative rounding noise, ``2^(8 - bits)``."""
        return 2.0 ** (8 - self.bits)


def _to_mpf(x: Real) -> mpmath.mpf:
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


@lru_cache(maxsize=1024)
def _gamma_half(two_nu_plus_2: int, prec: int) -> mpmath.mpf:
    """``Gamma(nu + 1)`` for ``2 nu + 2`` given as an integer."""
    with mpmath.workprec(prec):
        return mpmath.gamma(mpmath.mpf(two_nu_plus_2) / 2)


def _series_sum_fixed(two_nu: int, X: int, P: int) -> Tuple[int, int]:
    """Fixed-point ``sum_m (-x^2/4)^m / (m! (nu+1)_m)`` with ``x = X 2^-P``.

    Returns ``(S, lost)`` where ``S`` scales as ``2^P`` and ``lost`` is the
    number of bits cancelled (bit length of the largest term minus that of
    the sum).
    """
    y = (X * X) >> (P + 2)
    one = 1 << P
    term = one
    s = one
    biggest = one
    m = 0
    while term:
        m += 1
        term = -(((term * y) >> P) * 2) // (m * (2 * m + two_nu))
        s += term
        if abs(term) > biggest:
            biggest = abs(term)
    lost = biggest.bit_length() - max(abs(s).bit_length(), 1)
    return s, max(lost, 0)


def _series_scaled(two_nu: int, x: mpmath.mpf, bits: int) -> Tuple[int, int]:
    """Series factor of ``J_nu(x)`` as a fixed-point integer with ``bits`` good bits.

    Returns ``(S, P)`` with ``S / 2^P`` the series value.
    """
    guard = int(float(x) * 1.45) + 24
    while True:
        P = bits + guard
        X = to_fixed(x._mpf_, P)
        s, lost = _series_sum_fixed(two_nu, X, P)
        if lost + 16 <= guard:
            return s, P
        guard = lost + 32


def _prefactor(two_nu: int, x: mpmath.mpf, prec: int) -> mpmath.mpf:
    """``(x/2)^nu / Gamma(nu + 1)``."""
    with mpmath.workprec(prec):
        half = x / 2
        return mpmath.power(half, mpmath.mpf(two_nu) / 2) / _gamma_half(two_nu + 2, prec)


def bessel_j_series(l, x: Real, ctx: PrecisionContext = PrecisionContext()) -> mpmath.mpf:
    """``J_l(x)`` from the ascending series at extended precision."""
    order = BesselOrder.of(l)
    bits = ctx.bits + 16
    with mpmath.workprec(bits):
        xm = _to_mpf(x)
    if not xm > 0 or not mpmath.isfinite(xm):
        raise ValueError(f"x must be positive and finite, got {x}")
    s, P = _series_scaled(order.two_l, xm, bits)
    with mpmath.workprec(bits):
        val = _prefactor(order.two_l, xm, bits) * mpmath.mpf((s, -P))
    with mpmath.workprec(ctx.bits):
        return +val


def _start_order(two_l: int, x: float) -> int:
    """``2N`` for the recurrence start: ``N - l`` integral, ``N > max(l, x) + 10``."""
    l = two_l / 2
    steps = 10 + max(0, math.ceil(x - l)) + math.ceil(2 * max(x, 1.0) ** (1 / 3))
    return two_l + 2 * steps


def bessel_j_recurrence(l, x: Real, ctx: PrecisionContext = PrecisionContext()) -> mpmath.mpf:
    """``J_l(x)`` by downward recurrence seeded with series values at orders ``N``, ``N + 1``.

    The order ``N`` exceeds ``x``, so the series at ``N`` suffers little
    cancellation, and in the downward direction ``J`` is never the
    subdominant solution, so rounding errors are not amplified.
    """
    order = BesselOrder.of(l)
    bits = ctx.bits + 16
    with mpmath.workprec(bits):
        xm = _to_mpf(x)
    if not xm > 0 or not mpmath.isfinite(xm):
        raise ValueError(f"x must be positive and finite, got {x}")
    two_N = _start_order(order.two_l, float(xm))
    steps = (two_N - order.two_l) // 2
    work = bits + 32 + steps.bit_length() * 2
    sN, P1 = _series_scaled(two_N, xm, work)
    sN1, P2 = _series_scaled(two_N + 2, xm, work)
    P = max(P1, P2)
    sN <<= P - P1
    sN1 <<= P - P2
    X = to_fixed(xm._mpf_, P)
    # F_v = J_v (2N + 2) / prefactor_N in fixed point
    f_hi = (sN1 * X) >> P  # order N + 1
    f = sN * (two_N + 2)  # order N
    with mpmath.workprec(P + 8):
        xinv = to_fixed((1 / xm)._mpf_, P)
    two_nu = two_N
    for _ in range(steps):
        f, f_hi = ((two_nu * f * xinv) >> P) - f_hi, f
        two_nu -= 2
    with mpmath.workprec(bits):
        pref = _prefactor(two_N, xm, bits)
        val = pref * mpmath.mpf((f, -P)) / (two_N + 2)
    with mpmath.workprec(ctx.bits):
        return +val


def bessel_j(l, x: Real, ctx: PrecisionContext = PrecisionContext(), method: str = "auto") -> mpmath.mpf:
    """``J_l(x)`` for half-integer ``l`` and ``x > 0``.

    ``method`` is ``"auto"`` (series for ``x <= l``, recurrence otherwise),
    ``"series"`` or ``"recurrence"``.
    """
    order = BesselOrder.of(l)
    if method == "series":
        return bessel_j_series(order, x, ctx)
    if method == "recurrence":
        return bessel_j_recurrence(order, x, ctx)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    with mpmath.workprec(ctx.bits + 16):
        xm = _to_mpf(x)
    if xm <= mpmath.mpf(order.two_l) / 2:
        return bessel_j_series(order, xm, ctx)
    return bessel_j_recurrence(order, xm, ctx)


def bessel_bound(l, x: Real, c: Real = Fraction(7, 5), bits: int = 128) -> mpmath.mpf:
    """The envelope ``(c x / l)^l``; ``c`` must exceed ``e/2``."""
    order = BesselOrder.of(l)
    with mpmath.workprec(bits):
        cm = _to_mpf(c)
        if not cm > mpmath.e / 2:
            raise ValueError(f"c = {c} must exceed e/2")
        lm = order.mpf()
        return mpmath.power(cm * _to_mpf(x) / lm, lm)


def bessel_power_bound(l, x: Real, bits: int = 64) -> mpmath.mpf:
    """``(x/2)^l / Gamma(l + 1)``, a classical upper bound for ``|J_l(x)|``.

    It never exceeds ``(c x / l)^l`` for ``c >= e/2`` because
    ``Gamma(l + 1) >= (l/e)^l``, so tails built from it are dominated by the
    envelope above.
    """
    order = BesselOrder.of(l)
    with mpmath.workprec(bits):
        return _prefactor(order.two_l, _to_mpf(x), bits)


# ---------------------------------------------------------------------------
# Gauss-Legendre


def _legendre_fixed(n: int, X: int, P: int) -> Tuple[int, int]:
    """``(P_n(x), P_{n-1}(x))`` in fixed point for ``x = X 2^-P``."""
    p0, p1 = 1 << P, X
    for j in range(2, n + 1):
        p0, p1 = p1, (((2 * j - 1) * X * p1 >> P) - (j - 1) * p0) // j
    return p1, p0


@lru_cache(maxsize=64)
def gauss_legendre(n: int, bits: int) -> Tuple[Tuple[mpmath.mpf, ...], Tuple[mpmath.mpf, ...]]:
    """Nodes and weights of the ``n``-point rule on ``[-1, 1]``.

    Double precision roots (numpy) seed Newton's method on the three-term
    Legendre recurrence, run in fixed-point integers with ``bits + 32``
    fractional bits.  The returned nodes are sorted and exactly
    antisymmetric; ``n`` must be even.
    """
    if n % 2 or n < 2:
        raise ValueError("only even rule sizes are supported")
    P = bits + 32
    one = 1 << P
    seeds = np.polynomial.legendre.leggauss(n)[0][n // 2:][::-1]
    nodes: List[mpmath.mpf] = []
    weights: List[mpmath.mpf] = []
    for seed in seeds:
        X = int(mpmath.mpf(float(seed)) * one)
        for _ in range(60):
            pn, pm = _legendre_fixed(n, X, P)
            # P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
            num = n * ((X * pn >> P) - pm)
            den = (X * X >> P) - one
            dp = (num << P) // den
            dx = (pn << P) // dp
            X -= dx
            if abs(dx) <= 4:
                break
        else:  # pragma: no cover
            raise QuadratureError("Legendre root iteration failed")
        pn, pm = _legendre_fixed(n, X, P)
        with mpmath.workprec(P):
            x = mpmath.mpf((X, -P))
            dpv = n * (x * mpmath.mpf((pn, -P)) - mpmath.mpf((pm, -P))) / (x * x - 1)
            nodes.append(x)
            weights.append(2 / ((1 - x * x) * dpv * dpv))
    with mpmath.workprec(P):
        xs = [-x for x in nodes] + list(reversed(nodes))
        ws = list(weights) + list(reversed(weights))
    with mpmath.workprec(bits):
        return tuple(+x for x in xs), tuple(+w for w in ws)


@lru_cache(maxsize=64)
def _theta_rule(n: int, bits: int):
    """Nodes ``sin(theta_i)`` and weights for ``[0, pi/2]``."""
    xs, ws = gauss_legendre(n, bits + 16)
    with mpmath.workprec(bits + 16):
        q = mpmath.pi / 4
        sines = tuple(mpmath.sin(q * (1 + x)) for x in xs)
        wts = tuple(q * w for w in ws)
    return sines, wts


@dataclass(frozen=True)
class QuadratureResult:
    value: mpmath.mpf
    error: float
    nodes: int
    levels: Tuple[float, ...] = field(default=())


@lru_cache(maxsize=256)
def _theta_table(two_l: int, n: int, bits: int):
    """Per-node ``w sin^{2l+1}`` (mpf) and ``sin^2`` for the batched integrand."""
    sines, wts = _theta_rule(n, bits)
    with mpmath.workprec(bits + 16):
        half = mpmath.mpf(two_l) / 2
        weights = tuple(w * mpmath.power(sn, 2 * half + 1) for sn, w in zip(sines, wts))
        squares = tuple(sn * sn for sn in sines)
    return weights, squares


def _series_sum_y(two_nu: int, Y: int, P: int) -> Tuple[int, int]:
    """As ``_series_sum_fixed`` but with ``y = x^2/4`` given in fixed point."""
    one = 1 << P
    term = one
    s = one
    biggest = one
    m = 0
    while term:
        m += 1
        mag = ((abs(term) * Y) >> P) * 2 // (m * (2 * m + two_nu))
        term = -mag if term > 0 else mag
        s += term
        if mag > biggest:
            biggest = mag
    lost = biggest.bit_length() - max(abs(s).bit_length(), 1)
    return s, max(lost, 0)


def _jj_level(order: BesselOrder, a: mpmath.mpf, b: mpmath.mpf, n: int, ctx: PrecisionContext, same: bool):
    """One Gauss-Legendre level.

    ``J_l(x sin t) = (x sin t / 2)^l / Gamma(l+1) * S(x^2 sin^2 t / 4)`` with
    ``S`` the normalised ascending series, so the integrand factors as
    ``(ab/4)^l / Gamma(l+1)^2 * sin^{2l+1} t * S_a * S_b``.  The series are
    summed per node in fixed point with guard bits covering the cancellation.
    """
    two_l = order.two_l
    weights, squares = _theta_table(two_l, n, ctx.bits)
    bits = ctx.bits + 16
    guard = int(float(b) * 1.45) + 24
    while True:
        P = bits + guard
        with mpmath.workprec(P + 16):
            ya = to_fixed((a * a / 4)._mpf_, P)
            yb = ya if same else to_fixed((b * b / 4)._mpf_, P)
            sq = [to_fixed(q._mpf_, P) for q in squares]
        prods = []
        worst = 0
        for q in sq:
            sa, la = _series_sum_y(two_l, (ya * q) >> P, P)
            if same:
                sb, lb = sa, la
            else:
                sb, lb = _series_sum_y(two_l, (yb * q) >> P, P)
            worst = max(worst, la, lb)
            prods.append(sa * sb)
        if worst + 16 <= guard:
            break
        guard = worst + 32
    with mpmath.workprec(bits):
        head = mpmath.power(a * b / 4, mpmath.mpf(two_l) / 2) / _gamma_half(two_l + 2, bits) ** 2
        total = mpmath.fsum(w * mpmath.mpf((pr, -2 * P)) for w, pr in zip(weights, prods))
        return head * total


def _jj_levels(l, s1: Real, s2: Real, ctx: PrecisionContext, max_levels: int, stop: bool):
    order = BesselOrder.of(l)
    with mpmath.workprec(ctx.bits + 16):
        s1m, s2m = _to_mpf(s1), _to_mpf(s2)
        if not (s1m > 0 and s2m > 0):
            raise ValueError("s1 and s2 must be positive")
        lo, hi = (s1m, s2m) if s1m <= s2m else (s2m, s1m)
        a, b = 4 * mpmath.pi * lo, 4 * mpmath.pi * hi
    same = lo == hi
    n = ctx.quad_nodes
    prev = _jj_level(order, a, b, n, ctx, same)
    values = [prev]
    errors: List[float] = []
    for _ in range(max_levels):
        n *= 2
        cur = _jj_level(order, a, b, n, ctx, same)
        with mpmath.workprec(ctx.bits + 16):
            err = float(abs(cur - prev))
        values.append(cur)
        errors.append(err)
        if stop and err <= ctx.tail_target:
            break
        prev = cur
    return values, errors, n


def jj_integral_with_error(l, s1: Real, s2: Real, ctx: PrecisionContext = PrecisionContext()) -> QuadratureResult:
    """J-cal_l with its node-doubling error estimate.

    The integrand is symmetric in ``(s1, s2)`` and the pair is sorted before
    evaluation, so swapping the arguments gives bit-identical results.
    Raises ``QuadratureError`` when ``ctx.max_doublings`` doublings do not
    bring successive levels within ``ctx.tail_target``.
    """
    values, errors, n = _jj_levels(l, s1, s2, ctx, ctx.max_doublings, stop=True)
    if errors[-1] > ctx.tail_target:
        raise QuadratureError(
            f"J-cal not converged after {len(errors)} doublings ({n} nodes): "
            f"estimate {errors[-1]:.3e} > target {ctx.tail_target:.3e}"
        )
    with mpmath.workprec(ctx.bits):
        return QuadratureResult(+values[-1], errors[-1], n, tuple(errors))


def jj_integral(l, s1: Real, s2: Real, ctx: PrecisionContext = PrecisionContext()) -> mpmath.mpf:
    """``int_0^{pi/2} J_l(4 pi s1 sin t) J_l(4 pi s2 sin t) sin t dt``."""
    return jj_integral_with_error(l, s1, s2, ctx).value


def jj_error_sequence(l, s1: Real, s2: Real, ctx: PrecisionContext = PrecisionContext(), levels: int = 4) -> List[float]:
    """Error estimates ``|I_{2n} - I_n|`` for ``levels`` successive doublings."""
    _, errors, _ = _jj_levels(l, s1, s2, ctx, levels, stop=False)
    return errors
