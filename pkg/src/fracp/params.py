"""Problem parameters and scalar kernel functions.

The parameter quadruple (N, s, p, q) fixes the fractional p-Laplacian
(-Delta_p)^s in dimension N with differentiability order s in (0, 1),
growth exponent p >= 2, and a data integrability exponent q (q = inf is
admitted and represented by ``math.inf``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

QINF = math.inf


def _frac(x) -> Fraction:
    """Exact rational from the shortest decimal repr of a float.

    Decimal-clean inputs (0.4, 2.5, ...) become the intended rationals, so
    exponent arithmetic built on them is exact instead of accumulating
    binary rounding (0.4 * 3 / 2 -> exactly 3/5, not 0.6000000000000001).
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(float(x)))


def spow(t, gamma):
    """Signed power |t|^(gamma-1) * t, vectorized.

    Magnitudes below 1e-300 are treated as exact zeros so that negative
    exponents produced by intermediate algebra cannot overflow.
    """
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    tiny = a < 1e-300
    safe = np.where(tiny, 1.0, a)
    out = np.where(tiny, 0.0, np.sign(t) * safe**gamma)
    if out.ndim == 0:
        return float(out)
    return out


def jp(t, p):
    """The odd monotone kernel J_p(t) = |t|^(p-2) * t, vectorized over t."""
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    return spow(t, p - 1.0)


def omega_n(N: int) -> float:
    """Volume of the unit ball in R^N (omega_1 = 2, omega_2 = pi)."""
    return math.pi ** (N / 2.0) / math.gamma(N / 2.0 + 1.0)


def p_conjugate(p: float) -> float:
    return p / (p - 1.0)


@dataclass(frozen=True)
class Params:
    """Parameter quadruple (N, s, p, q); q = math.inf means bounded data."""

    N: int
    s: float
    p: float
    q: float = QINF

    def __post_init__(self):
        if not (isinstance(self.N, int) and self.N >= 1):
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not (0.0 < self.s < 1.0):
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not (self.p >= 2.0):
            raise ValueError(f"p must be >= 2, got {self.p}")
        if not (self.q >= 1.0):  # inf passes
            raise ValueError(f"q must be >= 1 or inf, got {self.q}")

    @property
    def sp(self) -> float:
        return self.s * self.p

    @property
    def n_over_q(self) -> float:
        """N/q with the convention N/inf = 0."""
        return 0.0 if math.isinf(self.q) else self.N / self.q

    def theta_hypothesis_ok(self) -> bool:
        """q large enough for the exponent formula: q > N/(sp) when sp <= N."""
        sp = _frac(self.s) * _frac(self.p)
        if sp > self.N:
            return True
        if math.isinf(self.q):
            return True
        return _frac(self.q) > Fraction(self.N) / sp


def _theta_raw(params: Params) -> Fraction:
    """(sp - N/q)/(p - 1) in exact rational arithmetic (N/inf = 0)."""
    s, p = _frac(params.s), _frac(params.p)
    nq = Fraction(0) if math.isinf(params.q) else Fraction(params.N) / _frac(params.q)
    return (s * p - nq) / (p - 1)


def theta_exponent(params: Params) -> float:
    """Holder exponent Theta = min{(sp - N/q)/(p - 1), 1}.

    Raises ValueError when sp <= N and q <= N/(sp): the formula is only
    meaningful for data integrable enough that sp - N/q > 0.
    """
    if not params.theta_hypothesis_ok():
        raise ValueError(
            f"q must exceed N/(s*p) = {params.N / params.sp} when sp <= N; got q = {params.q}"
        )
    return float(min(_theta_raw(params), Fraction(1)))


def theta_regime(params: Params) -> str:
    """Label the exponent regime.

    'capped' when the raw exponent exceeds 1 (Theta saturates at Lipschitz),
    'capped boundary' at exact saturation, 'almost sharp' otherwise (an
    uncapped exponent always satisfies sp <= (p-1) + N/q, the regime where
    the exponent is known to be essentially unimprovable).
    """
    raw = _theta_raw(params)
    if raw > 1:
        return "capped"
    if raw == 1:
        return "capped boundary"
    return "almost sharp"
