"""Matrices of Poincare series coefficients and the checks built on them.

* ``build_matrix``: ``a_{m,n} = A(P_{m I}, n I)``, optionally normalised by
  ``(m/n)^l``, each entry with its truncation tail;
* ``dominance_certificate``: Gershgorin row dominance including tails,
  re-validated by an independent full-pivot elimination;
* ``maass_residual`` and ``petersson_symmetry_gap``: end-to-end identities
  that any correct assembly of the coefficient formula must satisfy;
* ``decay_experiment`` and ``triangle_report``: tables of magnitudes;
* ``eigen_inequality_check``: exact rational check of
  ``lambda_min(C^{-1} tC^{-1}) <= 2 / Tr(C tC)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import mpmath

from .forms import HalfIntegralForm, InvalidFormError
from .kitaoka import CoefficientBreakdown, TruncationPolicy, WeightContext, fourier_coefficient
from .kloosterman import IntegerMatrix2, SingularMatrixError

__all__ = [
    "SeriesMatrix",
    "DominanceCertificate",
    "EliminationResult",
    "MaassReport",
    "PeterssonReport",
    "DecayRow",
    "TriangleReport",
    "build_matrix",
    "dominance_certificate",
    "full_pivot_elimination",
    "maass_terms",
    "maass_report",
    "maass_residual",
    "petersson_report",
    "petersson_symmetry_gap",
    "inner_product_value",
    "decay_experiment",
    "decay_target",
    "triangle_report",
    "eigen_inequality_check",
    "maass_facts",
    "jacobi_lift_coefficient",
]


def _mpc(z) -> mpmath.mpc:
    return z if isinstance(z, mpmath.mpc) else mpmath.mpc(z)


def _fmt(x, digits: int = 25) -> str:
    return mpmath.nstr(x, digits, min_fixed=-5, max_fixed=5) if x != 0 else "0"


# ---------------------------------------------------------------------------
# matrices


@dataclass(frozen=True)
class SeriesMatrix:
    """Square matrix of coefficients with a tail bound on every entry."""

    indices: Tuple[int, ...]
    entries: Tuple[Tuple[mpmath.mpc, ...], ...]
    tails: Tuple[Tuple[float, ...], ...]
    normalized: bool = False
    weight: Optional[WeightContext] = None
    rank0: Tuple[Tuple[int, ...], ...] = ()

    def __post_init__(self):
        n = len(self.indices)
        if n == 0:
            raise ValueError("a series matrix needs at least one index")
        if len(self.entries) != n or any(len(r) != n for r in self.entries):
            raise ValueError("entries must form a square matrix matching the indices")
        if len(self.tails) != n or any(len(r) != n for r in self.tails):
            raise ValueError("tails must have the shape of the entries")
        if not all(t >= 0 and math.isfinite(t) for r in self.tails for t in r):
            raise ValueError("tail bounds must be finite and non-negative")

    @classmethod
    def from_values(cls, values, tails=None, indices=None) -> "SeriesMatrix":
        """Matrix from plain numbers (used for synthetic certificate tests)."""
        n = len(values)
        entries = tuple(tuple(_mpc(mpmath.mpmathify(v)) for v in row) for row in values)
        if tails is None:
            tails = [[0.0] * n for _ in range(n)]
        return cls(
            tuple(indices) if indices is not None else tuple(range(1, n + 1)),
            entries,
            tuple(tuple(float(t) for t in row) for row in tails),
        )

    @property
    def size(self) -> int:
        return len(self.indices)

    def scale_factor(self, i: int, j: int) -> mpmath.mpf:
        """``(m/n)^l`` for the entry at row ``m = indices[i]``, column ``n = indices[j]``."""
        if self.weight is None:
            raise ValueError("normalisation needs the weight")
        w = self.weight
        with mpmath.workprec(w.bits + 16):
            return mpmath.power(mpmath.mpf(self.indices[i]) / self.indices[j], w.l.mpf())

    def rescaled(self) -> "SeriesMatrix":
        """The normalised matrix ``(m/n)^l a_{m,n}`` from a plain one."""
        if self.normalized:
            return self
        n = self.size
        rows, trows = [], []
        with mpmath.workprec(self.weight.bits):
            for i in range(n):
                row, trow = [], []
                for j in range(n):
                    f = self.scale_factor(i, j)
                    row.append(+(self.entries[i][j] * f))
                    trow.append(float(self.tails[i][j] * f) * (1 + 1e-12))
                rows.append(tuple(row))
                trows.append(tuple(trow))
        return SeriesMatrix(self.indices, tuple(rows), tuple(trows), True, self.weight, self.rank0)

    def off_identity(self, diagonal: int = 8) -> Tuple[Tuple[mpmath.mpc, ...], ...]:
        """``B = entries - diagonal * I``."""
        return tuple(
            tuple(self.entries[i][j] - (diagonal if i == j else 0) for j in range(self.size))
            for i in range(self.size)
        )

    def to_json(self, digits: int = 25) -> Dict[str, object]:
        return {
            "indices": list(self.indices),
            "normalized": self.normalized,
            "k": self.weight.k if self.weight else None,
            "entries": [[{"re": _fmt(z.real, digits), "im": _fmt(z.imag, digits)} for z in row] for row in self.entries],
            "tails": [list(r) for r in self.tails],
        }

    def to_csv(self, digits: int = 25) -> str:
        """Real parts as decimal strings; header row and column are the indices."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow([""] + [str(i) for i in self.indices])
        for idx, row in zip(self.indices, self.entries):
            wr.writerow([str(idx)] + [_fmt(z.real, digits) for z in row])
        return buf.getvalue()


def _entry(args):
    k, bits, m, n, pol = args
    w = WeightContext.create(k, bits)
    return fourier_coefficient(HalfIntegralForm.scalar(m), HalfIntegralForm.scalar(n), w, pol)


def _compute_entries(jobs, workers: int) -> List[CoefficientBreakdown]:
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_entry, jobs))
    return [_entry(j) for j in jobs]


def build_matrix(
    k: int,
    indices: Sequence[int],
    normalized: bool = False,
    pol: TruncationPolicy = TruncationPolicy(),
    bits: Optional[int] = None,
) -> SeriesMatrix:
    """``(A(P_{m I}, n I))_{m, n}``; normalised entries are ``(m/n)^l`` times the plain ones.

    Entries are independent coefficient runs; with ``pol.workers > 1`` they
    are computed in a process pool (one worker per entry, the inner sums
    single-threaded) and collected in index order.
    """
    idx = tuple(int(i) for i in indices)
    if not idx:
        raise ValueError("indices must be nonempty")
    if len(set(idx)) != len(idx) or min(idx) < 1:
        raise ValueError("indices must be distinct positive integers")
    w = WeightContext.create(k, bits)
    inner = replace(pol, workers=1)
    jobs = [(k, w.bits, m, n, inner) for m in idx for n in idx]
    results = _compute_entries(jobs, pol.workers)
    size = len(idx)
    entries, tails, rank0 = [], [], []
    for i in range(size):
        row = results[i * size:(i + 1) * size]
        entries.append(tuple(b.total for b in row))
        tails.append(tuple(b.tail_bound for b in row))
        rank0.append(tuple(b.rank0 for b in row))
    plain = SeriesMatrix(idx, tuple(entries), tuple(tails), False, w, tuple(rank0))
    return plain.rescaled() if normalized else plain


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class EliminationResult:
    """Outcome of Gaussian elimination with complete pivoting."""

    nonsingular: bool
    pivots: Tuple[float, ...]
    threshold: float


@dataclass(frozen=True)
class DominanceCertificate:
    certified: bool
    per_row_margin: Tuple[float, ...]
    worst_row: int
    elimination: EliminationResult

    def to_json(self) -> Dict[str, object]:
        return {
            "certified": self.certified,
            "per_row_margin": list(self.per_row_margin),
            "worst_row": self.worst_row,
            "elimination_nonsingular": self.elimination.nonsingular,
            "pivots": list(self.elimination.pivots),
        }


def full_pivot_elimination(values, bits: int = 128) -> EliminationResult:
    """Complete-pivoting elimination on a square matrix of numbers.

    A pivot counts as zero when its modulus is below
    ``n * 2^(16 - bits) * max|entry|``; the matrix is declared nonsingular
    when no pivot is zero.
    """
    with mpmath.workprec(bits):
        A = [[_mpc(mpmath.mpmathify(v)) for v in row] for row in values]
        n = len(A)
        scale = max((abs(v) for row in A for v in row), default=mpmath.mpf(0))
        thresh = n * mpmath.mpf(2) ** (16 - bits) * scale
        pivots = []
        rows, cols = list(range(n)), list(range(n))
        for step in range(n):
            best, bi, bj = mpmath.mpf(-1), step, step
            for i in range(step, n):
                for j in range(step, n):
                    v = abs(A[rows[i]][cols[j]])
                    if v > best:
                        best, bi, bj = v, i, j
            rows[step], rows[bi] = rows[bi], rows[step]
            cols[step], cols[bj] = cols[bj], cols[step]
            piv = A[rows[step]][cols[step]]
            pivots.append(float(abs(piv)))
            if abs(piv) <= thresh:
                return EliminationResult(False, tuple(pivots), float(thresh))
            for i in range(step + 1, n):
                f = A[rows[i]][cols[step]] / piv
                for j in range(step, n):
                    A[rows[i]][cols[j]] -= f * A[rows[step]][cols[j]]
        return EliminationResult(True, tuple(pivots), float(thresh))


def dominance_certificate(M: SeriesMatrix, bits: int = 128) -> DominanceCertificate:
    """Strict row diagonal dominance with every entry widened by its tail.

    Row margin ``|m_ii| - sum_{j != i} |m_ij| - sum_j tail_ij``; a positive
    margin in every row certifies nonsingularity by Gershgorin's theorem.
    The numeric entries are independently eliminated as a cross-check.
    """
    n = M.size
    margins = []
    with mpmath.workprec(bits):
        for i in range(n):
            diag = abs(M.entries[i][i])
            off = mpmath.fsum(abs(M.entries[i][j]) for j in range(n) if j != i)
            margins.append(float(diag - off) - math.fsum(M.tails[i]))
    worst = min(range(n), key=lambda i: (margins[i], i))
    elim = full_pivot_elimination(M.entries, bits)
    return DominanceCertificate(all(m > 0 for m in margins), tuple(margins), worst, elim)


# ---------------------------------------------------------------------------
# Maass relation


@dataclass(frozen=True)
class MaassReport:
    k: int
    Q: HalfIntegralForm
    target: HalfIntegralForm
    lhs: mpmath.mpc
    rhs: mpmath.mpc
    terms: Tuple[Tuple[int, HalfIntegralForm, mpmath.mpc], ...]
    residual: float
    tail: float
    largest_term: float

    @property
    def within(self) -> float:
        """Allowed discrepancy: tails plus ``1e-6`` relative to the largest term."""
        return self.tail + 1e-6 * self.largest_term

    def to_json(self) -> Dict[str, object]:
        return {
            "k": self.k,
            "Q": self.Q.to_json(),
            "target": self.target.to_json(),
            "lhs": _fmt(self.lhs.real),
            "rhs": _fmt(self.rhs.real),
            "terms": [{"d": d, "form": str(f), "value": _fmt(v.real)} for d, f, v in self.terms],
            "residual": self.residual,
            "tail": self.tail,
            "largest_term": self.largest_term,
        }


def maass_terms(k: int, m: int, n: int, r: int) -> Tuple[HalfIntegralForm, List[Tuple[int, int, HalfIntegralForm]]]:
    """Target ``[[m, r/2], [r/2, n]]`` and the divisor terms ``(d, d^{k-1}, [[mn/d^2, r/2d], [r/2d, 1]])``."""
    target = HalfIntegralForm(m, r, n)  # validates positive definiteness
    g = math.gcd(math.gcd(m, n), r)
    terms = []
    for d in range(1, g + 1):
        if g % d == 0:
            terms.append((d, d ** (k - 1), HalfIntegralForm(m * n // (d * d), r // d, 1)))
    return target, terms


def maass_report(k: int, Q: HalfIntegralForm, m: int, n: int, r: int, pol: TruncationPolicy = TruncationPolicy(),
                 bits: Optional[int] = None) -> MaassReport:
    """Both sides of the Maass relation for ``F = P_Q`` at ``[[m, r/2], [r/2, n]]``."""
    if 4 * m * n - r * r <= 0 or m < 1 or n < 1:
        raise InvalidFormError(f"[[{m}, {r}/2], [{r}/2, {n}]] is not positive definite")
    w = WeightContext.create(k, bits)
    target, divs = maass_terms(k, m, n, r)
    lhs_b = fourier_coefficient(Q, target, w, pol)
    tail = lhs_b.tail_bound
    parts = []
    largest = float(abs(lhs_b.total))
    with mpmath.workprec(w.bits + 16):
        for d, mult, form in divs:
            b = fourier_coefficient(Q, form, w, pol)
            v = mult * b.total
            parts.append((d, form, v))
            tail += mult * b.tail_bound
            largest = max(largest, float(abs(v)))
        rhs = mpmath.fsum(v for _, _, v in parts)
        residual = float(abs(lhs_b.total - rhs))
    return MaassReport(k, Q, target, lhs_b.total, rhs, tuple(parts), residual, tail, largest)


def maass_residual(k: int, Q: HalfIntegralForm, m: int, n: int, r: int, pol: TruncationPolicy = TruncationPolicy()) -> float:
    """``|A(P_Q, [[m, r/2], [r/2, n]]) - sum_d d^{k-1} A(P_Q, [[mn/d^2, r/2d], [r/2d, 1]])|``."""
    return maass_report(k, Q, m, n, r, pol).residual


# ---------------------------------------------------------------------------
# Petersson symmetry


@dataclass(frozen=True)
class PeterssonReport:
    k: int
    Q: HalfIntegralForm
    T: HalfIntegralForm
    left: mpmath.mpc  # A(P_T, Q) det(T)^l
    right: mpmath.mpc  # A(P_Q, T) det(Q)^l
    gap: float
    tail: float
    scale: float

    @property
    def within(self) -> float:
        """Allowed gap: combined tails plus ``1e-8`` relative."""
        return self.tail + 1e-8 * self.scale

    def to_json(self) -> Dict[str, object]:
        return {
            "k": self.k,
            "Q": self.Q.to_json(),
            "T": self.T.to_json(),
            "A(P_T,Q) det(T)^l": _fmt(self.left.real),
            "A(P_Q,T) det(Q)^l": _fmt(self.right.real),
            "gap": self.gap,
            "tail": self.tail,
        }


def petersson_report(k: int, Q: HalfIntegralForm, T: HalfIntegralForm, pol: TruncationPolicy = TruncationPolicy(),
                     bits: Optional[int] = None) -> PeterssonReport:
    w = WeightContext.create(k, bits)
    if Q == T:
        b = fourier_coefficient(Q, T, w, pol)
        with mpmath.workprec(w.bits):
            v = b.total * mpmath.power(mpmath.mpf(Q.disc) / 4, w.l.mpf())
        return PeterssonReport(k, Q, T, v, v, 0.0, 0.0, float(abs(v)))
    b_tq = fourier_coefficient(T, Q, w, pol)  # A(P_T, Q)
    b_qt = fourier_coefficient(Q, T, w, pol)  # A(P_Q, T)
    with mpmath.workprec(w.bits + 16):
        fT = mpmath.power(mpmath.mpf(T.disc) / 4, w.l.mpf())
        fQ = mpmath.power(mpmath.mpf(Q.disc) / 4, w.l.mpf())
        left = b_tq.total * fT
        right = b_qt.total * fQ
        gap = float(abs(left - right))
        tail = float(b_tq.tail_bound * fT + b_qt.tail_bound * fQ)
        scale = float(max(abs(left), abs(right)))
    return PeterssonReport(k, Q, T, left, right, gap, tail, scale)


def petersson_symmetry_gap(k: int, Q: HalfIntegralForm, T: HalfIntegralForm, pol: TruncationPolicy = TruncationPolicy()) -> float:
    """``|A(P_T, Q) det(T)^l - A(P_Q, T) det(Q)^l|``; zero when ``Q == T``."""
    return petersson_report(k, Q, T, pol).gap


def inner_product_value(k: int, coeff, Q: HalfIntegralForm, bits: Optional[int] = None) -> mpmath.mpf:
    """``<F, P_Q> = 8 c_k A(F, Q) / det(Q)^l`` for a supplied coefficient ``A(F, Q)``."""
    w = WeightContext.create(k, bits)
    with mpmath.workprec(w.bits):
        c = mpmath.mpmathify(coeff)
        return 8 * w.c_k * c / mpmath.power(mpmath.mpf(Q.disc) / 4, w.l.mpf())


# ---------------------------------------------------------------------------
# decay tables


@dataclass(frozen=True)
class DecayRow:
    k: int
    target: HalfIntegralForm
    entry: mpmath.mpc
    rank0: int
    deviation: float
    tail: float
    certified: bool

    def to_json(self) -> Dict[str, object]:
        return {
            "k": self.k,
            "target": str(self.target),
            "entry": _fmt(self.entry.real),
            "rank0": self.rank0,
            "deviation": self.deviation,
            "tail": self.tail,
            "certified": self.certified,
        }


_TARGETS = ("qI", "diag", "I")


def decay_target(kind: str, q: int) -> HalfIntegralForm:
    """``qI`` -> ``q I_2``; ``diag`` -> ``diag(q^2, 1)``; ``I`` -> ``I_2``."""
    if kind == "qI":
        return HalfIntegralForm.scalar(q)
    if kind == "diag":
        return HalfIntegralForm.diagonal(q * q, 1)
    if kind == "I":
        return HalfIntegralForm.scalar(1)
    raise ValueError(f"target must be one of {_TARGETS}, got {kind!r}")


def decay_experiment(k_list: Sequence[int], p: int, q: int, target: str = "qI",
                     pol: TruncationPolicy = TruncationPolicy()) -> List[DecayRow]:
    """``|A(P_{pI}, target) - rank0|`` for each weight in ``k_list`` (increasing)."""
    ks = [int(k) for k in k_list]
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("k_list must be strictly increasing")
    T = decay_target(target, q)
    Q = HalfIntegralForm.scalar(p)
    rows = []
    for k in ks:
        w = WeightContext.create(k)
        b = fourier_coefficient(Q, T, w, pol)
        with mpmath.workprec(w.bits):
            dev = float(abs(b.total - b.rank0))
        rows.append(DecayRow(k, T, b.total, b.rank0, dev, b.tail_bound, b.certified))
    return rows


@dataclass(frozen=True)
class TriangleReport:
    """Both sides of the triangle inequality behind the non-intersection argument.

    ``lhs = |A(P_{p0 I}, p0 I)|`` against the three sums (all ``|lambda_p| = 1``)
    ``sum_{p != p0} |A(P_{pI}, p0 I)|``, ``sum_p |A(P_{pI}, diag(p0^2, 1))|``
    and ``sum_p p0^{k-1} |A(P_{pI}, I)|``.
    """

    k: int
    primes: Tuple[int, ...]
    p0: int
    lhs: float
    sums: Tuple[float, float, float]
    tails: Tuple[float, float, float, float]

    @property
    def lhs_exceeds_sums(self) -> bool:
        return self.lhs - self.tails[0] > sum(self.sums) + sum(self.tails[1:])

    def to_json(self) -> Dict[str, object]:
        return {
            "k": self.k,
            "primes": list(self.primes),
            "p0": self.p0,
            "lhs": self.lhs,
            "off_diagonal_sum": self.sums[0],
            "diag_target_sum": self.sums[1],
            "identity_target_sum": self.sums[2],
            "tails": list(self.tails),
            "lhs_exceeds_sums": self.lhs_exceeds_sums,
        }


def triangle_report(k: int, primes: Sequence[int], p0: int, pol: TruncationPolicy = TruncationPolicy()) -> TriangleReport:
    ps = tuple(int(p) for p in primes)
    if p0 not in ps:
        raise ValueError("p0 must be one of the primes")
    w = WeightContext.create(k)
    I = HalfIntegralForm.scalar(1)
    P0 = HalfIntegralForm.scalar(p0)
    D0 = HalfIntegralForm.diagonal(p0 * p0, 1)

    def coef(p, T):
        return fourier_coefficient(HalfIntegralForm.scalar(p), T, w, pol)

    b0 = coef(p0, P0)
    s1 = [coef(p, P0) for p in ps if p != p0]
    s2 = [coef(p, D0) for p in ps]
    s3 = [coef(p, I) for p in ps]
    mult = p0 ** (k - 1)
    sums = (
        math.fsum(float(abs(b.total)) for b in s1),
        math.fsum(float(abs(b.total)) for b in s2),
        mult * math.fsum(float(abs(b.total)) for b in s3),
    )
    tails = (
        b0.tail_bound,
        math.fsum(b.tail_bound for b in s1),
        math.fsum(b.tail_bound for b in s2),
        mult * math.fsum(b.tail_bound for b in s3),
    )
    return TriangleReport(k, ps, p0, float(abs(b0.total)), sums, tails)


# ---------------------------------------------------------------------------
# eigenvalue inequality


def eigen_inequality_check(C) -> bool:
    """Exact check of ``lambda_min(C^{-1} tC^{-1}) <= 2 / Tr(C tC)``.

    ``X = C^{-1} tC^{-1}`` has trace ``t = Tr(C tC)/det^2`` and determinant
    ``1/det^2``; with ``r = 2/Tr(C tC)`` the smaller root of
    ``mu^2 - t mu + 1/det^2`` is at most ``r`` iff ``r >= t/2`` or
    ``r^2 - t r + 1/det^2 <= 0``.  Everything is a Fraction.
    """
    M = C if isinstance(C, IntegerMatrix2) else IntegerMatrix2.from_rows(C)
    d = M.det
    if d == 0:
        raise SingularMatrixError("C is singular")
    fro = M.a ** 2 + M.b ** 2 + M.c ** 2 + M.d ** 2
    t = Fraction(fro, d * d)
    delta = Fraction(1, d * d)
    r = Fraction(2, fro)
    if 2 * r >= t:
        return True
    return r * r - t * r + delta <= 0


# ---------------------------------------------------------------------------
# pinned literature data


@lru_cache(maxsize=1)
def maass_facts() -> Dict[str, object]:
    """Dimension facts and Jacobi coefficients for weights 10 and 12 (package data)."""
    text = resources.files("siegel_poincare").joinpath("data/maass_facts.json").read_text()
    return json.loads(text)


def jacobi_lift_coefficient(k: int, T: HalfIntegralForm) -> Fraction:
    """Fourier coefficient at ``T`` of the Maass lift spanning the weight ``k`` cusp space.

    ``A(a, b, c) = sum_{d | gcd(a, b, c)} d^{k-1} c((4ac - b^2)/d^2)`` with
    the pinned Jacobi coefficients (normalised as stored, divided by the
    stored scale).
    """
    data = maass_facts()["weights"].get(str(k))
    if data is None:
        raise KeyError(f"no pinned data for weight {k}")
    coeffs = {int(N): v for N, v in data["jacobi_coefficients"].items()}
    top = max(coeffs)
    g = math.gcd(math.gcd(T.a, T.b), T.c)
    total = Fraction(0)
    for d in range(1, g + 1):
        if g % d:
            continue
        N = T.disc // (d * d)
        if N > top:
            raise KeyError(f"discriminant {N} beyond the pinned range {top}")
        total += d ** (k - 1) * coeffs.get(N, 0)
    return total / data["jacobi_scale"]
