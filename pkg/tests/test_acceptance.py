"""Acceptance gate: one test and one PASS/FAIL line per criterion."""

import itertools
import math
import random
import time
from fractions import Fraction

import mpmath
import pytest

from siegel_poincare.analysis import (
    SeriesMatrix,
    build_matrix,
    decay_experiment,
    dominance_certificate,
    eigen_inequality_check,
    maass_report,
    petersson_report,
)
from siegel_poincare.bessel import (
    STANDARD_GRID_ORDERS,
    STANDARD_GRID_POINTS,
    PrecisionContext,
    bessel_bound,
    bessel_j_recurrence,
    bessel_j_series,
    jj_error_sequence,
)
from siegel_poincare.forms import HalfIntegralForm
from siegel_poincare.kitaoka import TruncationPolicy, WeightContext, fourier_coefficient
from siegel_poincare.kloosterman import (
    IntegerMatrix2,
    bruteforce_kloosterman,
    enumerate_coset_reps,
    h_sum,
    symplectic_kloosterman,
)

I2 = HalfIntegralForm(1, 0, 1)
TWO_I = HalfIntegralForm(2, 0, 2)
DIAG12 = HalfIntegralForm(1, 0, 2)
FORMS = (I2, TWO_I, DIAG12)
POLICY = TruncationPolicy()


def _small_matrices(max_det, bound):
    for m in itertools.product(range(-bound, bound + 1), repeat=4):
        if 0 < abs(m[0] * m[3] - m[1] * m[2]) <= max_det:
            yield ((m[0], m[1]), (m[2], m[3]))


def test_criterion_1_kloosterman_oracle(acceptance):
    start = time.perf_counter()
    checked, worst, count_mismatch = 0, mpmath.mpf(0), 0
    for C in _small_matrices(6, 4):
        for Q, T in itertools.product(FORMS, repeat=2):
            a = symplectic_kloosterman(Q, T, C)
            b = bruteforce_kloosterman(Q, T, C)
            worst = max(worst, abs(a.value - b.value))
            count_mismatch += a.term_count != b.term_count
            checked += 1
    elapsed = time.perf_counter() - start
    ok = worst < mpmath.mpf(10) ** -25 and count_mismatch == 0 and elapsed < 300
    acceptance(1, "Kloosterman vs brute force", ok,
               f"{checked} sums, max |diff| {mpmath.nstr(worst, 3)} (tol 1e-25), "
               f"{count_mismatch} count mismatches, {elapsed:.1f}s")
    assert ok


def test_criterion_2_exact_small_cases(acceptance):
    start = time.perf_counter()
    pairs = list(itertools.product(FORMS, repeat=2))
    identity_ok = all(
        symplectic_kloosterman(Q, T, ((1, 0), (0, 1))).term_count == 1
        and abs(symplectic_kloosterman(Q, T, ((1, 0), (0, 1))).value - 1) < mpmath.mpf(10) ** -30
        for Q, T in pairs
    )
    card_ok = True
    for C in _small_matrices(6, 4):
        d = abs(C[0][0] * C[1][1] - C[0][1] * C[1][0])
        card_ok &= len(enumerate_coset_reps(C)) ** 2 <= d ** 3
    rng = random.Random(2024)

    def form():
        while True:
            a, b, c = rng.randint(1, 12), rng.randint(-12, 12), rng.randint(1, 4)
            if b * b < 4 * a * c:
                return HalfIntegralForm(a, b, c)

    delta_ok = bound_ok = True
    for _ in range(200):
        P, S = form(), form()
        c = rng.randint(1, 50)
        for sign in (1, -1):
            v = h_sum(P, S, c, sign).value
            if P.c != S.c:
                delta_ok &= v == 0
            bound_ok &= abs(v) <= c * c * (1 + mpmath.mpf(10) ** -30)
    elapsed = time.perf_counter() - start
    ok = identity_ok and card_ok and delta_ok and bound_ok and elapsed < 60
    acceptance(2, "exact small cases", ok,
               f"K(I)=1 for {len(pairs)} pairs: {identity_ok}; |X(C)| <= |det C|^(3/2): {card_ok}; "
               f"H vanishes off the diagonal condition: {delta_ok}; |H| <= c^2: {bound_ok}; {elapsed:.1f}s")
    assert ok


def test_criterion_3_bessel_suite(acceptance):
    start = time.perf_counter()
    ctx = PrecisionContext()
    worst_rel, bound_ok, unit_ok = mpmath.mpf(0), True, True
    for l in STANDARD_GRID_ORDERS:
        for x in STANDARD_GRID_POINTS:
            a = bessel_j_series(l, x, ctx)
            b = bessel_j_recurrence(l, x, ctx)
            worst_rel = max(worst_rel, abs(a - b) / abs(b))
            bound_ok &= abs(a) <= bessel_bound(l, x, Fraction(7, 5))
            unit_ok &= abs(a) <= 1
    halving_ok = True
    for l, s1, s2 in [("8.5", 1, 3), ("12.5", 2, 4), ("18.5", 3, 3), ("8.5", "0.5", 5)]:
        errs = jj_error_sequence(l, s1, s2, ctx, levels=3)
        halving_ok &= all(b <= a / 2 or b < 1e-34 for a, b in zip(errs, errs[1:]))
    elapsed = time.perf_counter() - start
    ok = worst_rel < mpmath.mpf(10) ** -25 and bound_ok and unit_ok and halving_ok and elapsed < 120
    acceptance(3, "Bessel suite", ok,
               f"30-point grid max rel diff {mpmath.nstr(worst_rel, 3)} (tol 1e-25); envelope c=1.4: {bound_ok}; "
               f"|J| <= 1: {unit_ok}; quadrature error halves: {halving_ok}; {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_4_maass_relation(acceptance):
    start = time.perf_counter()
    details, ok = [], True
    for k in (10, 12):
        rep = maass_report(k, I2, 2, 2, 2, POLICY)
        ok &= rep.residual <= rep.within
        details.append(f"k={k}: residual {rep.residual:.3e} <= tails {rep.tail:.3e} + 1e-6*{rep.largest_term:.3e}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1800
    acceptance(4, "Maass relation at (2,2,2)", ok, "; ".join(details) + f"; {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_5_petersson_symmetry(acceptance):
    start = time.perf_counter()
    details, ok = [], True
    for k in (10, 12):
        for Q, T in [(I2, TWO_I), (I2, DIAG12), (TWO_I, DIAG12)]:
            rep = petersson_report(k, Q, T, POLICY)
            ok &= rep.gap <= rep.within
            details.append(f"k={k} ({Q}|{T}): gap {rep.gap:.2e}, rel {rep.gap / rep.scale:.1e}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1800
    acceptance(5, "Petersson symmetry", ok, "; ".join(details) + f" (allowed: tails + 1e-8 rel); {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_6_refinement(acceptance):
    start = time.perf_counter()
    w = WeightContext.create(10)
    base = fourier_coefficient(I2, I2, w, POLICY)
    fine = fourier_coefficient(I2, I2, w, POLICY.doubled())
    with mpmath.workprec(128):
        change = float(abs(fine.total - base.total))
    elapsed = time.perf_counter() - start
    ok = change < base.tail_bound and elapsed < 1200
    acceptance(6, "refinement consistency", ok,
               f"|A(R=16) - A(R=8)| = {change:.3e} < tail {base.tail_bound:.3e} "
               f"(refined tail {fine.tail_bound:.3e}); {elapsed:.1f}s")
    assert ok


def test_criterion_7_eigen_inequality(acceptance):
    start = time.perf_counter()
    rng = random.Random(77)
    checked = failures = 0
    while checked < 1000:
        C = IntegerMatrix2(*(rng.randint(-20, 20) for _ in range(4)))
        if C.det == 0:
            continue
        checked += 1
        failures += not eigen_inequality_check(C)
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 60
    acceptance(7, "eigenvalue inequality", ok, f"{checked} matrices, {failures} failures (exact); {elapsed:.2f}s")
    assert ok


@pytest.mark.slow
def test_criterion_8_certificate_soundness(acceptance):
    start = time.perf_counter()
    M = build_matrix(10, [2, 3], normalized=True, pol=POLICY)
    cert = dominance_certificate(M)
    sound = (not cert.certified) or cert.elimination.nonsingular
    rng = random.Random(8)
    synthetic_ok = True
    for _ in range(50):
        n = rng.randint(2, 6)
        values = [[(8 if i == j else 0) + rng.uniform(-1, 1) / n for j in range(n)] for i in range(n)]
        c = dominance_certificate(SeriesMatrix.from_values(values))
        synthetic_ok &= c.certified and c.elimination.nonsingular
    singular_ok = True
    for _ in range(50):
        n = rng.randint(2, 6)
        u = [rng.randint(1, 9) for _ in range(n)]
        v = [rng.randint(1, 9) for _ in range(n)]
        rows = [[u[i] * v[j] for j in range(n)] for i in range(n)]
        c = dominance_certificate(SeriesMatrix.from_values(rows))
        singular_ok &= not c.certified
    elapsed = time.perf_counter() - start
    ok = sound and synthetic_ok and singular_ok and elapsed < 300
    margins = ", ".join(f"{m:.3f}" for m in cert.per_row_margin)
    acceptance(8, "certificate soundness", ok,
               f"k=10 normalized {{2,3}} certified={cert.certified} (margins {margins}), "
               f"elimination nonsingular={cert.elimination.nonsingular}; 50 synthetic 8I+B certified and "
               f"nonsingular: {synthetic_ok}; singular never certified: {singular_ok}; {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_9_decay_reporting(acceptance):
    start = time.perf_counter()
    rows = decay_experiment([10, 12, 16, 20], 2, 2, "qI", POLICY)
    finite = len(rows) == 4 and all(r.certified and math.isfinite(r.tail) for r in rows)
    devs = [r.deviation for r in rows]
    monotone = all(b < a for a, b in zip(devs, devs[1:]))
    table = ", ".join(f"k={r.k}: |A-8|={r.deviation:.3e} (tail {r.tail:.2e})" for r in rows)
    elapsed = time.perf_counter() - start
    acceptance(9, "decay reporting", finite,
               f"{table}; monotone decay observed: {monotone} (reported, not asserted); {elapsed:.1f}s")
    assert finite
