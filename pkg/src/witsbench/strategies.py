"""First decision-maker families and the state density they induce.

A strategy maps the source sample x0 to the control u1; the state is
x1 = x0 + u1. Families: zero, optimal linear (parameterized by its power),
BPSK, Witsenhausen's two-point map, and the n-step low-power-estimation
(LoPE) quantizer ``LopeParams``.

Endpoint conventions for LoPE follow the half-open segments
(-B[i+1], -B[i]] and [B[i], B[i+1]), with B[n] := +inf implied; sign(0) is +1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian import INV_SQRT_2PI, cdf_difference
from ._validation import check_finite, check_positive


@dataclass(frozen=True)
class ProblemConfig:
    """Source variance Q and channel-noise variance N."""

    Q: float = 1.0
    N: float = 0.1

    def __post_init__(self):
        check_positive(self.Q, "Q")
        check_positive(self.N, "N")

    @property
    def snr(self):
        return self.Q / self.N

    @property
    def sigma0(self):
        return math.sqrt(self.Q)


@dataclass(frozen=True)
class LopeParams:
    """Amplitudes ``a`` and breakpoints ``B`` of an n-step LoPE controller.

    Both are nondecreasing, ``a[0] >= 0`` and ``B[0] == 0``. The trailing
    breakpoint +inf is implicit and never stored.
    """

    a: tuple
    B: tuple

    def __init__(self, a, B=None):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        B = np.zeros(1) if B is None else np.atleast_1d(np.asarray(B, dtype=float))
        if a.ndim != 1 or B.ndim != 1:
            raise ValueError("a and B must be one-dimensional")
        if a.size == 0:
            raise ValueError("a LoPE controller needs at least one step")
        if a.size != B.size:
            raise ValueError(f"len(a)={a.size} does not match len(B)={B.size}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(B))):
            raise ValueError("amplitudes and breakpoints must be finite")
        if a[0] < 0.0 or np.any(np.diff(a) < 0.0):
            raise ValueError(f"amplitudes must satisfy 0 <= a_1 <= ... <= a_n, got {a.tolist()}")
        if B[0] != 0.0 or np.any(np.diff(B) < 0.0):
            raise ValueError(f"breakpoints must satisfy 0 = B_1 <= ... <= B_n, got {B.tolist()}")
        object.__setattr__(self, "a", tuple(float(v) for v in a))
        object.__setattr__(self, "B", tuple(float(v) for v in B))

    @property
    def n(self):
        return len(self.a)

    @property
    def amplitudes(self):
        return np.array(self.a)

    @property
    def breakpoints(self):
        return np.array(self.B)

    @property
    def upper_breakpoints(self):
        """B[1:] followed by +inf, i.e. the right end of each segment."""
        return np.append(np.array(self.B[1:]), np.inf)

    def scaled(self, factor):
        """Same breakpoints, amplitudes multiplied by ``factor >= 0``."""
        return LopeParams(self.amplitudes * factor, self.B)

    def padded(self, n):
        """Embed into an n-step controller by repeating the last segment with zero width."""
        if n < self.n:
            raise ValueError(f"cannot pad a {self.n}-step controller down to {n} steps")
        extra = n - self.n
        return LopeParams(self.a + (self.a[-1],) * extra, self.B + (self.B[-1],) * extra)


@dataclass(frozen=True)
class Zero:
    kind = "zero"


@dataclass(frozen=True)
class Linear:
    """Optimal linear policy at a power target ``P``."""

    P: float
    kind = "linear"

    def __post_init__(self):
        check_finite(self.P, "P")
        if self.P < 0.0:
            raise ValueError(f"power target must be nonnegative, got {self.P}")


@dataclass(frozen=True)
class Bpsk:
    a: float
    kind = "bpsk"

    def __post_init__(self):
        check_finite(self.a, "a")
        if self.a < 0.0:
            raise ValueError(f"BPSK amplitude must be nonnegative, got {self.a}")

    def as_lope(self):
        return LopeParams([self.a], [0.0])


@dataclass(frozen=True)
class TwoPoint:
    a: float
    kind = "two-point"

    def __post_init__(self):
        check_finite(self.a, "a")
        if self.a < 0.0:
            raise ValueError(f"two-point level must be nonnegative, got {self.a}")


@dataclass(frozen=True)
class Lope:
    params: LopeParams = field()
    kind = "lope"

    @classmethod
    def from_arrays(cls, a, B):
        return cls(LopeParams(a, B))


Strategy = Zero | Linear | Bpsk | TwoPoint | Lope


def lope_params_of(s):
    """LoPE parameters for the strategies that belong to the LoPE family, else None."""
    if isinstance(s, Lope):
        return s.params
    if isinstance(s, Bpsk):
        return s.as_lope()
    if isinstance(s, Zero):
        return LopeParams([0.0], [0.0])
    return None


def _sign(x):
    return np.where(x >= 0.0, 1.0, -1.0)


def _lope_u1(p: LopeParams, x0):
    a = p.amplitudes
    # segment index k with B[k] <= |x0| < B[k+1]; the left half-line uses (-B[k+1], -B[k]]
    mag = np.abs(x0)
    k = np.searchsorted(p.breakpoints, mag, side="right") - 1
    return -_sign(x0) * a[k]


def apply_gamma1(s, x0, cfg: ProblemConfig):
    """Control u1 chosen by the first decision maker for source value(s) ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    if isinstance(s, Zero):
        u = np.zeros_like(x0)
    elif isinstance(s, Linear):
        if s.P <= cfg.Q:
            u = -math.sqrt(s.P / cfg.Q) * x0
        else:
            u = -x0 + math.sqrt(s.P - cfg.Q)
    elif isinstance(s, Bpsk):
        u = -s.a * _sign(x0)
    elif isinstance(s, TwoPoint):
        u = s.a * _sign(x0) - x0
    elif isinstance(s, Lope):
        u = _lope_u1(s.params, x0)
    else:
        raise TypeError(f"unknown strategy {s!r}")
    return float(u) if u.ndim == 0 else u


def system_state(s, x0, cfg: ProblemConfig):
    """State x1 = x0 + u1."""
    x0 = np.asarray(x0, dtype=float)
    out = x0 + apply_gamma1(s, x0, cfg)
    return float(out) if np.ndim(out) == 0 else out


def segment_probabilities(p: LopeParams, cfg: ProblemConfig):
    """Probability that x0 falls in each right half-line segment [B[i], B[i+1])."""
    sd = cfg.sigma0
    return cdf_difference(p.breakpoints / sd, p.upper_breakpoints / sd)


def state_density(p: LopeParams, cfg: ProblemConfig, x, side=None):
    """Density of x1 under a LoPE controller, evaluated at scalar or array ``x``.

    Segment i contributes a Gaussian bump of the source shifted by +a[i] on
    (-B[i+1] + a[i], -B[i] + a[i]] and by -a[i] on [B[i] - a[i], B[i+1] - a[i]).
    Shifted segments overlap, so several pieces may add at one x.

    ``side="left"`` or ``"right"`` returns the one-sided limit instead, which
    differs from the value only at segment edges.
    """
    x = np.asarray(x, dtype=float)
    sd = cfg.sigma0
    a = p.amplitudes
    lo = p.breakpoints
    hi = p.upper_breakpoints
    xx = x[..., None]
    l_lo, l_hi = -hi + a, -lo + a
    r_lo, r_hi = lo - a, hi - a
    if side is None:
        # x0 = 0 belongs to the right half-line (sign(0) = +1), so the
        # innermost left segment is open at its inner end
        left = (xx > l_lo) & ((xx < l_hi) | ((xx == l_hi) & (lo > 0.0)))
        right = (xx >= r_lo) & (xx < r_hi)
    elif side == "left":
        left = (xx > l_lo) & (xx <= l_hi)
        right = (xx > r_lo) & (xx <= r_hi)
    elif side == "right":
        left = (xx >= l_lo) & (xx < l_hi)
        right = (xx >= r_lo) & (xx < r_hi)
    else:
        raise ValueError(f"side must be None, 'left' or 'right', got {side!r}")
    zl = (xx - a) / sd
    zr = (xx + a) / sd
    dens = np.where(left, np.exp(-0.5 * zl * zl), 0.0) + np.where(right, np.exp(-0.5 * zr * zr), 0.0)
    out = INV_SQRT_2PI / sd * dens.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def density_edges(p: LopeParams) -> np.ndarray:
    """Sorted, mirror-symmetric set of points where the state density may jump."""
    a = p.amplitudes
    ends = np.concatenate([p.breakpoints - a, p.breakpoints[1:] - a[:-1]])
    return np.unique(np.concatenate([ends, -ends]))


def sampled_state_density(p: LopeParams, cfg: ProblemConfig, half_width=None, step=2e-4):
    """Sample the state density on a symmetric grid with jumps resolved.

    The grid is k*step for |k*step| <= half_width, plus every edge point.
    Where the density jumps the edge appears twice, carrying the left and then
    the right limit, so trapezoid integration sees no discontinuity and the
    output mirrors exactly: row j and row -j-1 have opposite x and equal f.
    """
    if half_width is None:
        half_width = max(p.a) + 7.5 * cfg.sigma0
    k = int(math.floor(half_width / step))
    grid = np.arange(-k, k + 1) * step
    edges = density_edges(p)
    edges = edges[np.abs(edges) <= half_width]
    x = np.union1d(grid, edges)
    f_left = state_density(p, cfg, x, side="left")
    f_right = state_density(p, cfg, x, side="right")
    jump = np.isin(x, edges) & (f_left != f_right)
    reps = np.where(jump, 2, 1)
    xs = np.repeat(x, reps)
    fs = np.empty(xs.size)
    idx = np.cumsum(reps) - reps
    # at edges the point value can count a boundary twice; the one-sided limits cannot
    fs[idx] = f_left
    fs[idx[jump] + 1] = f_right[jump]
    return xs, fs
