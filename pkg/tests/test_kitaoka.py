import math
from dataclasses import replace

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles.jacobi import jacobi_coefficients, lift_coefficient
from siegel_poincare.forms import HalfIntegralForm
from siegel_poincare.kitaoka import (
    TruncationError,
    TruncationPolicy,
    WeightContext,
    fourier_coefficient,
    rank0_term,
    rank1_report,
    rank1_sign,
    rank1_term,
    rank2_report,
    u_classes,
    v_classes,
)
from siegel_poincare.kloosterman import h_sum

I2 = HalfIntegralForm(1, 0, 1)
FAST = TruncationPolicy(rank1_c_max=40, rank1_s_max=20, rank2_norm_max=4)
W10 = WeightContext.create(10)


class TestContexts:
    def test_weight_validation(self):
        with pytest.raises(ValueError):
            WeightContext(9)
        with pytest.raises(ValueError):
            WeightContext(4)

    def test_c_k(self):
        w = WeightContext.create(6)
        with mpmath.workprec(128):
            pi = mpmath.pi
            ref = mpmath.sqrt(pi) / 4 * (4 * pi) ** -9 * mpmath.gamma(mpmath.mpf(9) / 2) * mpmath.gamma(4)
        assert abs(w.c_k / ref - 1) < mpmath.mpf(10) ** -30

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            TruncationPolicy(tail_mode="guess")
        with pytest.raises(ValueError):
            TruncationPolicy(rank2_norm_max=8, rank2_bound_radius=4)
        with pytest.raises(ValueError):
            TruncationPolicy(workers=0)

    def test_doubled(self):
        d = FAST.doubled()
        assert (d.rank1_c_max, d.rank1_s_max, d.rank2_norm_max) == (80, 40, 8)


class TestRankZero:
    @pytest.mark.parametrize(
        "Q, T, expected",
        [
            (I2, I2, 8),
            (I2, HalfIntegralForm(2, 0, 2), 0),
            (HalfIntegralForm(1, 0, 2), HalfIntegralForm(1, 0, 2), 4),
            (HalfIntegralForm(1, 1, 1), HalfIntegralForm(1, -1, 1), 12),
            (HalfIntegralForm(2, 1, 3), HalfIntegralForm(2, -1, 3), 2),
            (HalfIntegralForm(1, 0, 2), HalfIntegralForm(1, 2, 3), 4),
        ],
    )
    def test_examples(self, Q, T, expected):
        assert rank0_term(Q, T) == expected

    def test_scalar_diagonal(self):
        for p in (1, 2, 3, 5):
            for q in (1, 2, 3, 5):
                assert rank0_term(HalfIntegralForm.scalar(p), HalfIntegralForm.scalar(q)) == (8 if p == q else 0)


class TestRankOne:
    def test_sign(self):
        assert [rank1_sign(k) for k in (6, 8, 10, 12)] == [-1, 1, -1, 1]

    @pytest.mark.parametrize("p, q", [(1, 2), (3, 3), (2, 5), (1, 5)])
    def test_s_divisible_by_p_and_q(self, p, q):
        rep = rank1_report(HalfIntegralForm.scalar(p), HalfIntegralForm.scalar(q), W10, FAST)
        assert rep.s_values and all(s % math.lcm(p, q) == 0 for s in rep.s_values)

    def test_no_common_values_gives_zero(self):
        # 2(x^2 + y^2) = 3(u^2 + v^2) has no primitive solutions: 3 never divides x^2 + y^2
        rep = rank1_report(HalfIntegralForm.scalar(2), HalfIntegralForm.scalar(3), W10, FAST)
        assert rep.s_values == [] and rep.value == 0

    def test_s_values_for_identity(self):
        rep = rank1_report(I2, I2, W10, FAST)
        primitive_sums = sorted({x * x + y * y for x in range(5) for y in range(1, 5) if math.gcd(x, y) == 1 and x * x + y * y <= 20})
        assert rep.s_values == primitive_sums

    @given(st.integers(1, 30))
    @settings(max_examples=30)
    def test_classes_have_value_s(self, s):
        for F in (I2, HalfIntegralForm(2, 1, 3)):
            for U, P in u_classes(F, s):
                assert P.c == s
                assert U[0][0] * U[1][1] - U[0][1] * U[1][0] == 1
            for V, S in v_classes(F, s):
                assert S.c == s
                assert V[0][0] * V[1][1] - V[0][1] * V[1][0] == 1

    @pytest.mark.parametrize("t", [-2, 1, 3])
    def test_completion_invariance(self, t):
        # another completion of the same bottom row shifts the top row of P
        for U, P in u_classes(HalfIntegralForm(2, 1, 3), 3) + u_classes(I2, 5):
            P2 = P.transform(((1, 0), (t, 1)))
            assert P2.c == P.c
            for S in (HalfIntegralForm(1, 1, P.c), HalfIntegralForm(4, -3, P.c)):
                for c in (1, 4, 6):
                    for sign in (1, -1):
                        a = h_sum(P, S, c, sign).value
                        b = h_sum(P2, S, c, sign).value
                        assert abs(a - b) < mpmath.mpf(10) ** -30

    def test_tail_target(self):
        with pytest.raises(TruncationError) as info:
            rank1_term(I2, I2, W10, replace(FAST, tail_target=1e-300))
        assert info.value.tail > 1e-300


class TestRankTwo:
    def test_zero_radius_is_all_tail(self):
        pol = TruncationPolicy(rank1_c_max=5, rank1_s_max=5, rank2_norm_max=0)
        rep = rank2_report(I2, I2, W10, pol)
        assert rep.value == 0 and rep.evaluated == 0
        assert rep.tail > 0 and rep.tail == sum(rep.tails.values())

    def test_real_values(self):
        rep = rank2_report(I2, HalfIntegralForm(1, 0, 2), W10, FAST)
        assert abs(rep.value.imag) < mpmath.mpf(10) ** -30


class TestFourierCoefficient:
    def test_breakdown_adds_up(self):
        r = fourier_coefficient(I2, I2, W10, FAST)
        assert r.rank0 == 8
        with mpmath.workprec(128):
            assert abs(r.total - (r.rank0 + r.rank1 + r.rank2)) < mpmath.mpf(10) ** -30
        assert abs(r.imag) < mpmath.mpf(10) ** -30
        assert r.certified and r.tail_bound > 0

    def test_memoised(self):
        a = fourier_coefficient(I2, I2, W10, FAST)
        b = fourier_coefficient(I2, I2, W10, FAST)
        assert a is b

    def test_tail_target_error_carries_breakdown(self):
        with pytest.raises(TruncationError) as info:
            fourier_coefficient(I2, I2, W10, replace(FAST, tail_target=1e-12))
        assert info.value.breakdown is not None and info.value.tail > 1e-12

    def test_reachable_target(self):
        r = fourier_coefficient(I2, I2, W10, replace(FAST, tail_target=10.0))
        assert r.tail_bound <= 10.0

    def test_doubling_mode_is_not_certified(self):
        r = fourier_coefficient(I2, I2, W10, replace(FAST, tail_mode="doubling"))
        assert not r.certified
        assert r.total == fourier_coefficient(I2, I2, W10, FAST).total

    def test_json_is_deterministic(self):
        r = fourier_coefficient(I2, I2, W10, FAST)
        assert r.to_json() == fourier_coefficient(I2, I2, W10, FAST).to_json()
        assert "timings" not in r.to_json()

    def test_gl2_invariance_in_T(self):
        a = fourier_coefficient(I2, HalfIntegralForm(2, 1, 3), W10, FAST)
        b = fourier_coefficient(I2, HalfIntegralForm(2, -1, 3), W10, FAST)
        assert abs(a.total - b.total) <= a.tail_bound + b.tail_bound


@pytest.mark.parametrize("k", [10, 12])
def test_proportional_to_maass_lift(k):
    """The cusp space is one-dimensional at these weights, so ``A(P_I, T)`` is a multiple of the lift."""
    coeffs = jacobi_coefficients(6)[k]
    w = WeightContext.create(k)
    intervals = []
    for T in (I2, HalfIntegralForm(1, 1, 1), HalfIntegralForm(1, 0, 2), HalfIntegralForm(2, 2, 2)):
        lift = lift_coefficient(coeffs, k, T.a, T.b, T.c)
        r = fourier_coefficient(I2, T, w, FAST)
        ratio = r.total.real / (mpmath.mpf(lift.numerator) / lift.denominator)
        err = r.tail_bound / abs(float(lift))
        intervals.append((float(ratio) - err, float(ratio) + err))
    lo = max(a for a, _ in intervals)
    hi = min(b for _, b in intervals)
    assert lo <= hi, intervals
