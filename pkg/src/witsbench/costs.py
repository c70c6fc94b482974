"""Closed-form power and estimation costs of LoPE controllers.

The estimation cost under the MMSE decoder splits as

    S = E[X1^2] - E[(E[X1 | Y1])^2],

where the first term is exact and the second is a one-dimensional integral
over the observation y of (sum E)^2 / (sum F), with F the per-segment pieces
of the observation density and E the matching first-moment pieces. Both have
closed forms in terms of phi and Phi; only the outer integral is numerical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._quadrature import QuadratureError, adaptive_gk15
from ._validation import check_finite, check_positive, check_positive_int
from .gaussian import INV_SQRT_2PI, cdf_difference
from .strategies import (
    Bpsk,
    Linear,
    Lope,
    LopeParams,
    ProblemConfig,
    TwoPoint,
    Zero,
    lope_params_of,
    segment_probabilities,
)

__all__ = [
    "CostPoint",
    "FETerms",
    "QuadratureConfig",
    "QuadratureError",
    "power_cost",
    "state_second_moment",
    "fe_terms",
    "observation_density",
    "conditional_mean",
    "decoder_second_moment",
    "estimation_cost",
    "linear_cost",
    "linear_cost_slope",
    "gaussian_envelope",
    "two_point_costs",
    "closed_form_cost",
]

_F_FLOOR = 1e-300


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    tail_sigmas: float = 10.0
    max_subdivisions: int = 2000

    def __post_init__(self):
        check_positive(self.abs_tol, "abs_tol")
        check_positive(self.rel_tol, "rel_tol")
        check_finite(self.tail_sigmas, "tail_sigmas")
        if self.tail_sigmas < 6.0:
            raise ValueError(f"tail_sigmas must be at least 6, got {self.tail_sigmas}")
        check_positive_int(self.max_subdivisions, "max_subdivisions")


@dataclass(frozen=True)
class CostPoint:
    """A point (P, S) in the power-estimation plane."""

    P: float
    S: float
    method: str = "closed_form"
    quad_error_estimate: float = 0.0


@dataclass(frozen=True)
class FETerms:
    """Per-segment pieces at observation(s) ``y``; arrays have shape y.shape + (n,)."""

    y: np.ndarray
    F_neg: np.ndarray
    F_pos: np.ndarray
    E_neg: np.ndarray
    E_pos: np.ndarray

    @property
    def F(self):
        return (self.F_neg + self.F_pos).sum(axis=-1)

    @property
    def E(self):
        return (self.E_neg + self.E_pos).sum(axis=-1)


def power_cost(p: LopeParams, cfg: ProblemConfig) -> float:
    """Expected control power 2 * sum(a_i^2 p_i)."""
    a = p.amplitudes
    return float(2.0 * np.sum(a * a * segment_probabilities(p, cfg)))


def state_second_moment(p: LopeParams, cfg: ProblemConfig) -> float:
    """E[X1^2] for a LoPE controller (exact)."""
    sd = cfg.sigma0
    a = p.amplitudes
    lo = p.breakpoints / sd
    hi = p.upper_breakpoints / sd
    pdf_lo = INV_SQRT_2PI * np.exp(-0.5 * lo * lo)
    pdf_hi = INV_SQRT_2PI * np.exp(-0.5 * hi * hi)
    return float(cfg.Q - 4.0 * sd * np.sum(a * (pdf_lo - pdf_hi)) + power_cost(p, cfg))


def _boundary(Q, N, shift, b):
    # exp(-(Q shift^2 + N b^2) / (2 Q N)), zero at b = +inf
    finite = np.isfinite(b)
    bf = np.where(finite, b, 0.0)
    sf = np.where(finite, shift, 0.0)
    return np.where(finite, np.exp(-(Q * sf * sf + N * bf * bf) / (2.0 * Q * N)), 0.0)


def fe_terms(p: LopeParams, cfg: ProblemConfig, y) -> FETerms:
    """Observation-density and first-moment pieces for each segment.

    F_neg[i] integrates the joint density of (X1, Y1=y) over the image of
    the left segment (-B[i+1], -B[i]], F_pos[i] over the right segment
    [B[i], B[i+1]); E_neg, E_pos are the same integrals weighted by x.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    Q, N = cfg.Q, cfg.N
    V = Q + N
    r = math.sqrt(V)
    s = math.sqrt(V / (Q * N))
    c = math.sqrt(Q * N) / (2.0 * math.pi * V)
    a = p.amplitudes
    lo = p.breakpoints
    hi = p.upper_breakpoints
    yy = y[..., None]

    zm = (yy - a) / r
    zp = (yy + a) / r
    dens_m = INV_SQRT_2PI / r * np.exp(-0.5 * zm * zm)
    dens_p = INV_SQRT_2PI / r * np.exp(-0.5 * zp * zp)
    shift_m = Q * (yy - a) / V
    shift_p = Q * (yy + a) / V
    F_neg = dens_m * cdf_difference(s * (lo + shift_m), s * (hi + shift_m))
    F_pos = dens_p * cdf_difference(s * (lo - shift_p), s * (hi - shift_p))

    E_neg = (a * N + yy * Q) / V * F_neg - c * (
        _boundary(Q, N, -lo + a - yy, lo) - _boundary(Q, N, -hi + a - yy, hi)
    )
    E_pos = (-a * N + yy * Q) / V * F_pos - c * (
        _boundary(Q, N, hi - a - yy, hi) - _boundary(Q, N, lo - a - yy, lo)
    )
    return FETerms(y=y, F_neg=F_neg, F_pos=F_pos, E_neg=E_neg, E_pos=E_pos)


def observation_density(p: LopeParams, cfg: ProblemConfig, y):
    """Density of Y1 = X1 + Z1 at ``y``."""
    out = fe_terms(p, cfg, y).F
    return float(out) if np.ndim(out) == 0 else out


def conditional_mean(p: LopeParams, cfg: ProblemConfig, y):
    """MMSE decoder E[X1 | Y1 = y].

    Where the observation density underflows, the outermost segment
    dominates the posterior and its own conditional mean is returned.
    """
    t = fe_terms(p, cfg, y)
    F, E = t.F, t.E
    yv = t.y
    ok = F > _F_FLOOR
    mean = np.divide(E, F, out=np.zeros_like(F), where=ok)
    if not np.all(ok):
        a_out = p.a[-1]
        sgn = np.where(yv >= 0.0, 1.0, -1.0)
        far = sgn * (cfg.Q * np.abs(yv) - a_out * cfg.N) / (cfg.Q + cfg.N)
        mean = np.where(ok, mean, far)
    return float(mean) if mean.ndim == 0 else mean


def _decoder_power_integrand(p, cfg):
    def g(y):
        t = fe_terms(p, cfg, y)
        F, E = t.F, t.E
        return np.divide(E * E, F, out=np.zeros_like(F), where=F > _F_FLOOR)

    return g


def decoder_second_moment(p: LopeParams, cfg: ProblemConfig, qc: QuadratureConfig | None = None):
    """E[(E[X1 | Y1])^2] by adaptive quadrature; returns ``(value, error_estimate)``.

    The integrand is even in y, so only [0, a_n + tail_sigmas*sqrt(Q+N)] is
    integrated and doubled.
    """
    qc = qc or QuadratureConfig()
    half = p.a[-1] + qc.tail_sigmas * math.sqrt(cfg.Q + cfg.N)
    try:
        value, err = adaptive_gk15(
            _decoder_power_integrand(p, cfg), 0.0, half,
            abs_tol=0.5 * qc.abs_tol, rel_tol=qc.rel_tol,
            max_subdivisions=qc.max_subdivisions,
        )
    except QuadratureError as exc:
        raise QuadratureError(2.0 * exc.estimate, 2.0 * exc.error, exc.subdivisions) from None
    return 2.0 * value, 2.0 * err


def estimation_cost(p: LopeParams, cfg: ProblemConfig, qc: QuadratureConfig | None = None) -> CostPoint:
    """Power and MMSE estimation cost of a LoPE controller.

    Raises
    ------
    QuadratureError
        When the decoder-power integral does not converge; ``estimate`` on the
        exception carries the partial integral.
    """
    second = state_second_moment(p, cfg)
    t2, err = decoder_second_moment(p, cfg, qc)
    return CostPoint(P=power_cost(p, cfg), S=second - t2, method="closed_form", quad_error_estimate=err)


def linear_cost(P, cfg: ProblemConfig) -> float:
    """Estimation cost of the best linear policy at power P."""
    P = check_finite(P, "P")
    if P < 0.0:
        raise ValueError(f"power must be nonnegative, got {P}")
    if P >= cfg.Q:
        return 0.0
    u = (math.sqrt(cfg.Q) - math.sqrt(P)) ** 2
    return u * cfg.N / (u + cfg.N)


def linear_cost_slope(P, cfg: ProblemConfig) -> float:
    """Analytic dS/dP of the best linear policy for 0 < P <= Q."""
    P = check_finite(P, "P")
    if not 0.0 < P <= cfg.Q:
        raise ValueError(f"slope is defined for 0 < P <= Q, got {P}")
    d = math.sqrt(cfg.Q) - math.sqrt(P)
    return -cfg.N ** 2 * d / (math.sqrt(P) * (d * d + cfg.N) ** 2)


@lru_cache(maxsize=32)
def _linear_hull(Q, N, grid_size):
    cfg = ProblemConfig(Q, N)
    xs = np.linspace(0.0, Q, grid_size)
    ys = np.array([linear_cost(x, cfg) for x in xs])
    # lower hull, monotone chain
    hull = []
    for i in range(grid_size):
        while len(hull) >= 2:
            j, k = hull[-2], hull[-1]
            cross = (xs[k] - xs[j]) * (ys[i] - ys[j]) - (ys[k] - ys[j]) * (xs[i] - xs[j])
            if cross <= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)
    return xs[hull], ys[hull]


def gaussian_envelope(P, cfg: ProblemConfig, grid_size: int = 10_000) -> float:
    """Lower convex envelope of the linear-policy cost curve on [0, Q]."""
    P = check_finite(P, "P")
    check_positive_int(grid_size, "grid_size")
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    if not 0.0 <= P <= cfg.Q:
        raise ValueError(f"P must lie in [0, Q={cfg.Q}], got {P}")
    hx, hy = _linear_hull(cfg.Q, cfg.N, grid_size)
    # a chord between hull nodes can sit above a convex stretch of the curve
    return min(float(np.interp(P, hx, hy)), linear_cost(P, cfg))


def two_point_costs(a, cfg: ProblemConfig, qc: QuadratureConfig | None = None) -> CostPoint:
    """Costs of the two-point map x1 = a*sign(x0) under its MMSE decoder a*tanh(a*y/N).

    Power is exact; the estimation cost integrates over the channel noise.
    """
    qc = qc or QuadratureConfig()
    a = check_finite(a, "a")
    if a < 0.0:
        raise ValueError("two-point level must be nonnegative")
    Q, N = cfg.Q, cfg.N
    P = Q - 2.0 * a * math.sqrt(2.0 * Q / math.pi) + a * a
    if a == 0.0:
        return CostPoint(P=P, S=0.0)
    sd = math.sqrt(N)

    def g(z):
        e = a - a * np.tanh(a * (a + z) / N)
        return INV_SQRT_2PI / sd * np.exp(-0.5 * (z / sd) ** 2) * e * e

    half = qc.tail_sigmas * sd + a
    S, err = adaptive_gk15(g, -half, half, abs_tol=qc.abs_tol, rel_tol=qc.rel_tol,
                           max_subdivisions=qc.max_subdivisions)
    return CostPoint(P=P, S=S, quad_error_estimate=err)


def closed_form_cost(s, cfg: ProblemConfig, qc: QuadratureConfig | None = None) -> CostPoint:
    """(P, S) for any strategy family with a closed-form or semi-closed-form cost."""
    if isinstance(s, Zero):
        return CostPoint(P=0.0, S=cfg.Q * cfg.N / (cfg.Q + cfg.N))
    if isinstance(s, Linear):
        return CostPoint(P=s.P, S=linear_cost(s.P, cfg))
    if isinstance(s, TwoPoint):
        return two_point_costs(s.a, cfg, qc)
    if isinstance(s, (Bpsk, Lope)):
        return estimation_cost(lope_params_of(s), cfg, qc)
    raise TypeError(f"no closed-form cost for {s!r}")
