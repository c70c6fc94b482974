"""Standard-normal special functions and closed-form Gaussian integrals.

Everything here is a pure function of its arguments. Infinite integration
limits are plain IEEE infinities (``math.inf``), never large sentinel values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

SQRT_2PI = math.sqrt(2.0 * math.pi)
INV_SQRT_2PI = 1.0 / SQRT_2PI

# log of the largest finite double is ~709.78; keep a margin for the bracket factor
_LOG_OVERFLOW = 700.0


class GaussianOverflowError(OverflowError):
    """The prefactor exp(c + b^2/(4a)) of a Gaussian integral is not representable."""

    def __init__(self, exponent):
        self.exponent = float(exponent)
        super().__init__(
            f"exp({self.exponent:.6g}) overflows double precision "
            f"(limit exp({_LOG_OVERFLOW:g}))"
        )


def _reject_nan(x, name="x"):
    if np.any(np.isnan(x)):
        raise ValueError(f"{name} must not be NaN")


def std_normal_pdf(x):
    """Standard normal density; accepts scalars or arrays of finite values."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("std_normal_pdf requires finite input")
    out = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


def std_normal_cdf(x):
    """Standard normal CDF, computed through erfc so both tails keep relative precision."""
    x = np.asarray(x, dtype=float)
    _reject_nan(x)
    out = ndtr(x)
    return float(out) if out.ndim == 0 else out


def cdf_difference(lo, hi):
    """Return Phi(hi) - Phi(lo) without cancellation in either tail.

    When both arguments sit in the upper tail the difference is taken between
    upper-tail probabilities, Phi(-lo) - Phi(-hi), which are small numbers
    known to full relative precision. Works elementwise on arrays and accepts
    infinite arguments.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    _reject_nan(lo, "lo")
    _reject_nan(hi, "hi")
    upper = (lo > 0.0) & (hi > 0.0)
    out = np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GaussianIntegralParams:
    """Parameters of the integrand exp(-a x^2 + b x + c) over [A, B]."""

    a: float
    b: float
    c: float
    A: float = -math.inf
    B: float = math.inf

    def __post_init__(self):
        for name in ("a", "b", "c", "A", "B"):
            if math.isnan(getattr(self, name)):
                raise ValueError(f"{name} must not be NaN")
        if not self.a > 0.0:
            raise ValueError(f"quadratic coefficient a must be positive, got {self.a}")
        if not all(math.isfinite(v) for v in (self.a, self.b, self.c)):
            raise ValueError("a, b, c must be finite")
        if self.A > self.B:
            raise ValueError(f"lower limit {self.A} exceeds upper limit {self.B}")
        if self.A == math.inf or self.B == -math.inf:
            raise ValueError("limits must not collapse onto a single infinity")

    @property
    def vertex(self):
        return self.b / (2.0 * self.a)

    @property
    def log_scale(self):
        return self.c + self.b * self.b / (4.0 * self.a)

    def integrand(self, x):
        return math.exp(-self.a * x * x + self.b * x + self.c)


def _boundary_exp(p, x):
    if math.isinf(x):
        return 0.0
    return math.exp(-p.a * x * x + p.b * x + p.c)


def integral_I1(p: GaussianIntegralParams) -> float:
    """Closed form of the integral of exp(-a x^2 + b x + c) from A to B.

    Raises
    ------
    GaussianOverflowError
        If ``c + b**2 / (4 a)`` exceeds the representable exponent range.
    """
    if p.log_scale > _LOG_OVERFLOW:
        raise GaussianOverflowError(p.log_scale)
    if p.A == p.B:
        return 0.0
    s = math.sqrt(2.0 * p.a)
    lo = s * (p.A - p.vertex)
    hi = s * (p.B - p.vertex)
    return math.sqrt(math.pi / p.a) * math.exp(p.log_scale) * cdf_difference(lo, hi)


def integral_I2(p: GaussianIntegralParams) -> float:
    """Closed form of the integral of x exp(-a x^2 + b x + c) from A to B.

    The boundary exponentials vanish at infinite limits.
    """
    i1 = integral_I1(p)
    if p.A == p.B:
        return 0.0
    return (p.b * i1 - (_boundary_exp(p, p.B) - _boundary_exp(p, p.A))) / (2.0 * p.a)
