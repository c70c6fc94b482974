"""Low-power slope diagnostics for the linear and BPSK strategies.

Both strategies should show dS/dP -> -inf as P -> 0+. Divergence cannot be
observed directly, so it is certified by the growth of |dS/dP| across
several decades of P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_array_1d
from .costs import QuadratureConfig, decoder_second_moment, estimation_cost, linear_cost_slope
from .strategies import LopeParams, ProblemConfig


@dataclass(frozen=True)
class SlopeDiagnostic:
    strategy_tag: str
    P_grid: np.ndarray
    slopes: np.ndarray
    divergence_ratio: np.ndarray

    @property
    def certified(self):
        """Slopes negative, magnitudes strictly growing, over at least three decades."""
        if self.P_grid.size < 2:
            return False
        decades = math.log10(self.P_grid[0] / self.P_grid[-1])
        return bool(
            np.all(self.slopes < 0.0)
            and np.all(self.divergence_ratio > 1.0)
            and decades >= 3.0
        )


@dataclass(frozen=True)
class BpskDecomposition:
    a: float
    T1: float
    T2: float
    S: float


def t1(a, cfg: ProblemConfig) -> float:
    """Second moment of the BPSK state, Q - 2a sqrt(2Q/pi) + a^2.

    Polynomial in ``a``; defined for negative ``a`` too so that symmetric
    differences at a = 0 are possible.
    """
    return cfg.Q - 2.0 * a * math.sqrt(2.0 * cfg.Q / math.pi) + a * a


def t1_slope(a, cfg: ProblemConfig) -> float:
    return -2.0 * math.sqrt(2.0 * cfg.Q / math.pi) + 2.0 * a


def t2(a, cfg: ProblemConfig, qc: QuadratureConfig | None = None) -> float:
    """Power of the MMSE estimate, E[(E[X1 | Y1])^2], under BPSK with amplitude ``a``."""
    value, _ = decoder_second_moment(LopeParams([a], [0.0]), cfg, qc)
    return value


def bpsk_decomposition(a, cfg: ProblemConfig, qc: QuadratureConfig | None = None) -> BpskDecomposition:
    if a < 0.0:
        raise ValueError("BPSK amplitude must be nonnegative")
    first = t1(a, cfg)
    second = t2(a, cfg, qc)
    return BpskDecomposition(a=float(a), T1=first, T2=second, S=first - second)


def _bpsk_cost(a, cfg, qc):
    return estimation_cost(LopeParams([a], [0.0]), cfg, qc).S


def bpsk_slope(P, cfg: ProblemConfig, qc: QuadratureConfig | None = None) -> float:
    """dS/dP for BPSK at power P = a^2, via a central difference in ``a``.

    The chain rule dS/dP = (dS/da) / (2a) avoids differencing in P, whose
    step would have to shrink with P itself.
    """
    a = math.sqrt(P)
    h = max(1e-6, 1e-4 * a)
    dS_da = (_bpsk_cost(a + h, cfg, qc) - _bpsk_cost(a - h, cfg, qc)) / (2.0 * h)
    return dS_da / (2.0 * a)


def slope_diagnostic(tag: str, cfg: ProblemConfig, P_grid, qc: QuadratureConfig | None = None) -> SlopeDiagnostic:
    """Slopes dS/dP along a strictly decreasing grid of powers.

    ``divergence_ratio[i]`` is |slope[i+1]| / |slope[i]|.
    """
    P_grid = check_array_1d(P_grid, "P_grid")
    if P_grid.size and (np.any(np.diff(P_grid) >= 0.0) or P_grid.min() < 1e-10):
        raise ValueError("P_grid must be strictly decreasing with entries >= 1e-10")
    if tag == "linear":
        slopes = np.array([linear_cost_slope(P, cfg) for P in P_grid])
    elif tag == "bpsk":
        qc = qc or QuadratureConfig(abs_tol=1e-13, rel_tol=1e-12)
        slopes = np.array([bpsk_slope(P, cfg, qc) for P in P_grid])
    else:
        raise ValueError(f"unknown strategy tag {tag!r}; expected 'linear' or 'bpsk'")
    mags = np.abs(slopes)
    ratio = mags[1:] / mags[:-1]
    return SlopeDiagnostic(strategy_tag=tag, P_grid=P_grid, slopes=slopes, divergence_ratio=ratio)
