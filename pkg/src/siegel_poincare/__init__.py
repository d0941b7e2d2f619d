"""Fourier coefficients of genus-two Siegel Poincare series of full level.

Modules: ``forms`` (half-integral binary forms), ``kloosterman`` (symplectic
Kloosterman sums and the rank-one sums H), ``bessel`` (half-integer order
Bessel functions and the integral J-cal), ``kitaoka`` (coefficient assembly
with truncation tails), ``analysis`` (matrices, certificates, identity
checks) and ``cli``.
"""

from .forms import HalfIntegralForm, InvalidFormError, UnimodularMatrix, automorphisms, is_equivalent, reduce
from .kloosterman import IntegerMatrix2, h_sum, symplectic_kloosterman
from .bessel import BesselOrder, PrecisionContext, bessel_j, jj_integral
from .kitaoka import (
    CoefficientBreakdown,
    TruncationError,
    TruncationPolicy,
    WeightContext,
    fourier_coefficient,
)

__version__ = "0.1.0"

__all__ = [
    "HalfIntegralForm",
    "InvalidFormError",
    "UnimodularMatrix",
    "automorphisms",
    "is_equivalent",
    "reduce",
    "IntegerMatrix2",
    "h_sum",
    "symplectic_kloosterman",
    "BesselOrder",
    "PrecisionContext",
    "bessel_j",
    "jj_integral",
    "CoefficientBreakdown",
    "TruncationError",
    "TruncationPolicy",
    "WeightContext",
    "fourier_coefficient",
    "__version__",
]
