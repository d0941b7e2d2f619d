from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siegel_poincare.bessel import (
    STANDARD_GRID_ORDERS,
    STANDARD_GRID_POINTS,
    BesselOrder,
    PrecisionContext,
    QuadratureError,
    bessel_bound,
    bessel_j,
    bessel_j_recurrence,
    bessel_j_series,
    bessel_power_bound,
    gauss_legendre,
    jj_error_sequence,
    jj_integral,
    jj_integral_with_error,
)

CTX = PrecisionContext()
GRID = [(l, x) for l in STANDARD_GRID_ORDERS for x in STANDARD_GRID_POINTS]


def rel(a, b):
    return abs(a - b) / max(abs(b), mpmath.mpf(10) ** -300)


class TestOrder:
    def test_from_weight(self):
        assert BesselOrder.from_weight(10).l == Fraction(17, 2)
        with pytest.raises(ValueError):
            BesselOrder.from_weight(7)

    @pytest.mark.parametrize("bad", [0, 2, -1])
    def test_rejects_even_two_l(self, bad):
        with pytest.raises(ValueError):
            BesselOrder(bad)

    def test_coercion(self):
        assert BesselOrder.of("8.5") == BesselOrder(17)
        assert BesselOrder.of(Fraction(1, 2)).two_l == 1
        with pytest.raises(ValueError):
            BesselOrder.of("8.25")


class TestBesselValues:
    def test_grid_size(self):
        assert len(GRID) == 30

    @pytest.mark.parametrize("l, x", GRID)
    def test_dual_method_agreement(self, l, x):
        a = bessel_j_series(l, x, CTX)
        b = bessel_j_recurrence(l, x, CTX)
        assert rel(a, b) < mpmath.mpf(10) ** -25
        assert abs(a) <= 1

    @pytest.mark.parametrize("l, x", GRID)
    def test_against_mpmath(self, l, x):
        with mpmath.workprec(200):
            ref = mpmath.besselj(mpmath.mpf(l.numerator) / l.denominator, mpmath.mpf(x))
        assert rel(bessel_j(l, x, CTX), ref) < mpmath.mpf(10) ** -25

    def test_closed_form_half_order(self):
        # J_{1/2}(pi/2) = sqrt(2/(pi x)) sin x = 2/pi
        with mpmath.workprec(140):
            x = mpmath.pi / 2
            expected = 2 / mpmath.pi
        for method in ("series", "recurrence"):
            assert rel(bessel_j(Fraction(1, 2), x, CTX, method=method), expected) < mpmath.mpf(10) ** -30

    @given(st.sampled_from(STANDARD_GRID_ORDERS), st.floats(0.01, 150))
    @settings(max_examples=40)
    def test_methods_agree_off_grid(self, l, x):
        a = bessel_j_series(l, x, CTX)
        b = bessel_j_recurrence(l, x, CTX)
        assert abs(a - b) <= mpmath.mpf(10) ** -25 * max(abs(b), mpmath.mpf(10) ** -20)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            bessel_j("8.5", 1, CTX, method="magic")


class TestBounds:
    @pytest.mark.parametrize("l, x", GRID)
    def test_envelope_with_c_1_4(self, l, x):
        j = abs(bessel_j(l, x, CTX))
        assert j <= bessel_bound(l, x, Fraction(7, 5))
        assert j <= bessel_power_bound(l, x, 128) * (1 + mpmath.mpf(10) ** -30)

    def test_power_bound_below_envelope(self):
        for l, x in GRID:
            assert bessel_power_bound(l, x, 128) <= bessel_bound(l, x, Fraction(7, 5))

    def test_constant_must_exceed_e_over_2(self):
        with pytest.raises(ValueError):
            bessel_bound("8.5", 1, Fraction(13, 10))


class TestQuadrature:
    @pytest.mark.parametrize("n", [16, 32, 64])
    def test_gauss_legendre_exact_on_polynomials(self, n):
        x, w = gauss_legendre(n, 128)
        with mpmath.workprec(128):
            assert abs(mpmath.fsum(w) - 2) < mpmath.mpf(10) ** -35
            for deg in (2, 10, 2 * n - 2):
                approx = mpmath.fsum(wi * xi ** deg for xi, wi in zip(x, w))
                assert abs(approx - mpmath.mpf(2) / (deg + 1)) < mpmath.mpf(10) ** -33

    @pytest.mark.parametrize("l, s1, s2", [("8.5", 1, 3), ("8.5", "0.5", "0.5"), ("12.5", 2, "1.5"), ("4.5", "0.2", 1)])
    def test_against_mpmath_quad(self, l, s1, s2):
        val = jj_integral(l, s1, s2, CTX)
        with mpmath.workprec(160):
            nu = mpmath.mpf(l)
            a, b = 4 * mpmath.pi * mpmath.mpf(s1), 4 * mpmath.pi * mpmath.mpf(s2)
            f = lambda t: mpmath.besselj(nu, a * mpmath.sin(t)) * mpmath.besselj(nu, b * mpmath.sin(t)) * mpmath.sin(t)
            ref = mpmath.quad(f, mpmath.linspace(0, mpmath.pi / 2, 9))
        assert rel(val, ref) < mpmath.mpf(10) ** -25

    def test_symmetric_in_arguments(self):
        assert jj_integral("8.5", 1, 3, CTX) == jj_integral("8.5", 3, 1, CTX)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            jj_integral("8.5", 0, 1, CTX)

    @pytest.mark.parametrize("l, s1, s2", [("8.5", 1, 3), ("12.5", 2, 4), ("18.5", 3, 3)])
    def test_error_estimate_halves(self, l, s1, s2):
        errs = jj_error_sequence(l, s1, s2, CTX, levels=3)
        floor = 1e-34
        for a, b in zip(errs, errs[1:]):
            assert b <= a / 2 or b < floor

    def test_error_reported(self):
        res = jj_integral_with_error("8.5", 1, 3, CTX)
        assert res.error <= CTX.tail_target and res.nodes >= 32

    def test_unreachable_target_raises(self):
        ctx = PrecisionContext(tail_target=1e-300, max_doublings=1)
        with pytest.raises(QuadratureError):
            jj_integral_with_error("8.5", 5, 7, ctx)
