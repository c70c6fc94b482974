"""Derivative-free optimization of LoPE parameters and frontier sweeps.

Ordering constraints on amplitudes and breakpoints are removed by a
squared-increment encoding: for a free vector z = (s_1..s_n, t_2..t_n),

    a_1 = s_1^2,  a_{i+1} = a_i + s_{i+1}^2,
    B_1 = 0,      B_{i+1} = B_i + t_{i+1}^2,

so every z decodes to a feasible controller. Local search is Nelder-Mead
(scipy) from a deterministic set of starts.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from ._validation import check_positive_int, check_unit_interval
from .costs import CostPoint, QuadratureConfig, estimation_cost, power_cost
from .montecarlo import _resolve_threads
from .strategies import LopeParams, ProblemConfig

log = logging.getLogger(__name__)


def encode(p: LopeParams) -> np.ndarray:
    """Free vector of length 2n-1 for a feasible controller."""
    a = p.amplitudes
    B = p.breakpoints
    s = np.sqrt(np.diff(np.concatenate([[0.0], a])))
    t = np.sqrt(np.diff(B))
    return np.concatenate([s, t])


def decode(z, n: int) -> LopeParams:
    z = np.asarray(z, dtype=float)
    if z.shape != (2 * n - 1,):
        raise ValueError(f"expected a free vector of length {2 * n - 1}, got shape {z.shape}")
    a = np.cumsum(z[:n] ** 2)
    B = np.concatenate([[0.0], np.cumsum(z[n:] ** 2)])
    return LopeParams(a, B)


def k_squared(omega):
    """Trade-off constant k^2 = omega / (1 - omega); infinite at omega = 1."""
    omega = check_unit_interval(omega, "omega")
    return math.inf if omega == 1.0 else omega / (1.0 - omega)


def omega_from_k_squared(k2):
    return 1.0 if math.isinf(k2) else k2 / (k2 + 1.0)


@dataclass(frozen=True)
class WeightedObjective:
    """omega * P + (1 - omega) * S for n-step controllers."""

    omega: float
    n: int
    cfg: ProblemConfig = field(default_factory=ProblemConfig)
    qc: QuadratureConfig = field(default_factory=QuadratureConfig)

    def __post_init__(self):
        check_unit_interval(self.omega, "omega")
        check_positive_int(self.n, "n")

    @property
    def k_squared(self):
        return k_squared(self.omega)

    def combine(self, point: CostPoint):
        return self.omega * point.P + (1.0 - self.omega) * point.S


def evaluate_objective(fp, obj: WeightedObjective) -> float:
    p = decode(fp, obj.n)
    if obj.omega == 1.0:
        return power_cost(p, obj.cfg)
    return obj.combine(estimation_cost(p, obj.cfg, obj.qc))


@dataclass(frozen=True)
class OptimizerOptions:
    restarts: int = 8
    max_iters: int = 4000
    x_tol: float = 1e-7
    f_tol: float = 1e-12
    init: LopeParams | None = None  # warm start; None means cold starts
    threads: int | None = 1


@dataclass
class FrontierRecord:
    omega: float
    k_squared: float
    params: LopeParams
    point: CostPoint
    objective_value: float
    converged: bool
    restarts_used: int
    dominated: bool = False


def cold_starts(n: int, cfg: ProblemConfig, count: int = 8) -> list:
    """Deterministic, dispersed initial controllers scaled by sqrt(Q)."""
    sd = cfg.sigma0
    i = np.arange(n, dtype=float)
    span = 3.0 * sd
    step = span / max(n - 1, 1)
    fine_B = i * step
    starts = [
        # fine quantizer: equal breakpoints out to 3 sd, amplitudes near segment centers
        (0.9 * (fine_B + 0.5 * step), fine_B),
        # two-point-like: large amplitudes, breakpoints bunched near zero
        ((0.8 + 0.4 * i) * sd, 0.05 * i * sd),
        # low power: small amplitudes on a wide grid
        (0.05 * (i + 1) * sd, fine_B),
        # silent center: a_1 = 0 with a wide first segment
        (0.2 * i * sd, np.where(i > 0, (1.2 + 0.3 * (i - 1)) * sd, 0.0)),
    ]
    rng = np.random.default_rng(20240601 + n)
    while len(starts) < count:
        inc_a = rng.uniform(0.0, 0.6, n) * sd
        inc_B = rng.uniform(0.0, 1.0, n) * sd
        inc_B[0] = 0.0
        starts.append((np.cumsum(inc_a), np.cumsum(inc_B)))
    return [LopeParams(a, B) for a, B in starts[:count]]


def _initial_simplex(z0, scale):
    d = z0.size
    simplex = np.tile(z0, (d + 1, 1))
    for k in range(d):
        simplex[k + 1, k] += scale
    return simplex


def _local_search(fun, z0, opts, scale):
    res = minimize(
        fun, z0, method="Nelder-Mead",
        options=dict(
            maxiter=opts.max_iters, maxfev=4 * opts.max_iters,
            xatol=opts.x_tol, fatol=opts.f_tol, adaptive=True,
            initial_simplex=_initial_simplex(z0, scale),
        ),
    )
    return res.x, float(res.fun), bool(res.success)


def _best(results):
    # lowest objective, then lexicographically smallest parameter vector
    return min(results, key=lambda r: (r[1], tuple(r[0])))


def _run_starts(fun, starts, opts, scale):
    threads = _resolve_threads(opts.threads)
    job = lambda z0: _local_search(fun, z0, opts, scale)
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, starts))
    return [job(z0) for z0 in starts]


def _starts_for(n, cfg, opts):
    if opts.init is not None:
        init = opts.init
        if init.n < n:
            init = init.padded(n)
        if init.n != n:
            raise ValueError(f"warm start has {init.n} steps, expected {n}")
        return [encode(init)]
    return [encode(p) for p in cold_starts(n, cfg, opts.restarts)]


def optimize_at(obj: WeightedObjective, opts: OptimizerOptions | None = None) -> FrontierRecord:
    """Minimize the weighted objective from cold starts or a single warm start."""
    opts = opts or OptimizerOptions()
    starts = _starts_for(obj.n, obj.cfg, opts)
    scale = 0.1 * obj.cfg.Q ** 0.25
    results = _run_starts(lambda z: evaluate_objective(z, obj), starts, opts, scale)
    z, _, _ = _best(results)
    params = decode(z, obj.n)
    point = estimation_cost(params, obj.cfg, obj.qc)
    return FrontierRecord(
        omega=obj.omega,
        k_squared=obj.k_squared,
        params=params,
        point=point,
        objective_value=obj.combine(point),
        converged=any(r[2] for r in results),
        restarts_used=len(starts),
    )


def rescale_to_power(p: LopeParams, power: float, cfg: ProblemConfig) -> LopeParams:
    """Multiply amplitudes so the controller spends exactly ``power``.

    Segment probabilities do not depend on the amplitudes, so P scales with
    the square of the factor. All-zero amplitudes become a flat level.
    """
    current = power_cost(p, cfg)
    if current > 0.0:
        return p.scaled(math.sqrt(power / current))
    return LopeParams(np.full(p.n, math.sqrt(power)), p.B)


def optimize_at_power(n: int, power: float, cfg: ProblemConfig, qc: QuadratureConfig | None = None,
                      opts: OptimizerOptions | None = None) -> FrontierRecord:
    """Minimize S over n-step controllers constrained to spend exactly ``power``.

    The constraint is eliminated by rescaling amplitudes after decoding, so a
    warm start already at this power is never made worse.
    """
    qc = qc or QuadratureConfig()
    opts = opts or OptimizerOptions()
    if power < 0.0:
        raise ValueError("power must be nonnegative")

    def fun(z):
        return estimation_cost(rescale_to_power(decode(z, n), power, cfg), cfg, qc).S

    starts = _starts_for(n, cfg, opts)
    results = _run_starts(fun, starts, opts, 0.1 * cfg.Q ** 0.25)
    z, _, _ = _best(results)
    params = rescale_to_power(decode(z, n), power, cfg)
    point = estimation_cost(params, cfg, qc)
    return FrontierRecord(
        omega=math.nan, k_squared=math.nan, params=params, point=point,
        objective_value=point.S, converged=any(r[2] for r in results),
        restarts_used=len(starts),
    )


@dataclass
class FrontierSweep:
    n: int
    cfg: ProblemConfig
    records: list

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    @property
    def P(self):
        return np.array([r.point.P for r in self.records])

    @property
    def S(self):
        return np.array([r.point.S for r in self.records])

    def pareto(self):
        return [r for r in self.records if not r.dominated]


def flag_dominated(records, tol=1e-12):
    """Mark records beaten in both P and S (strictly in one) by another record."""
    P = np.array([r.point.P for r in records])
    S = np.array([r.point.S for r in records])
    for i, r in enumerate(records):
        weak = (P <= P[i] + tol) & (S <= S[i] + tol)
        strict = (P < P[i] - tol) | (S < S[i] - tol)
        r.dominated = bool(np.any(weak & strict))
    return records


def parse_omega_grid(text: str) -> np.ndarray:
    """``start:end:count`` (endpoints included) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"omega grid must look like start:end:count, got {text!r}")
        start, end, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("omega grid needs at least one point")
        grid = np.linspace(start, end, count)
    else:
        grid = np.array([float(v) for v in text.split(",") if v.strip()])
    for w in grid:
        check_unit_interval(float(w), "omega")
    return grid


@dataclass(frozen=True)
class SweepOptions:
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    refine_rounds: int = 2  # knee and gap refinement passes
    max_power_gap: float | None = None  # default: Q / 50


def _insert_midpoints(records, obj_for, opts, gap):
    """Add an omega midpoint after every record followed by a large power jump
    or sitting at the sharpest knee; each midpoint warm-starts from its left neighbor."""
    P = np.array([r.point.P for r in records])
    S = np.array([r.point.S for r in records])
    targets = {i for i in range(len(records) - 1) if abs(P[i + 1] - P[i]) > gap}
    if len(records) >= 3:
        second = np.abs(np.diff(S, 2))
        k = int(np.argmax(second)) + 1
        if second[k - 1] > 0.0:
            targets.update({k - 1, k})
    out = []
    for i, r in enumerate(records):
        out.append(r)
        if i in targets and i + 1 < len(records):
            w = 0.5 * (r.omega + records[i + 1].omega)
            if w in (r.omega, records[i + 1].omega):
                continue
            warm = replace(opts.optimizer, init=r.params)
            out.append(optimize_at(obj_for(w), warm))
    return out


def sweep(n: int, cfg: ProblemConfig, omegas, opts: SweepOptions | None = None,
          qc: QuadratureConfig | None = None) -> FrontierSweep:
    """Warm-started continuation of the weighted optimum along sorted ``omegas``.

    The first point uses cold starts; each later point starts from its
    predecessor's optimum, so the sweep follows one family of local optima
    as long as it persists.
    """
    opts = opts or SweepOptions()
    qc = qc or QuadratureConfig()
    omegas = np.asarray(omegas, dtype=float)
    if omegas.size == 0:
        raise ValueError("omega grid is empty")
    if np.any(np.diff(omegas) < 0.0):
        raise ValueError("omegas must be sorted ascending")

    def obj_for(w):
        return WeightedObjective(float(w), n, cfg, qc)

    records = []
    for w in omegas:
        init = records[-1].params if records else opts.optimizer.init
        rec = optimize_at(obj_for(w), replace(opts.optimizer, init=init))
        if not rec.converged:
            log.info("omega=%.6g did not meet f_tol", w)
        records.append(rec)

    gap = opts.max_power_gap if opts.max_power_gap is not None else cfg.Q / 50.0
    for _ in range(opts.refine_rounds):
        before = len(records)
        records = _insert_midpoints(records, obj_for, opts, gap)
        if len(records) == before:
            break

    _check_continuity(records)
    flag_dominated(records)
    return FrontierSweep(n=n, cfg=cfg, records=records)


def _check_continuity(records):
    for left, right in zip(records, records[1:]):
        jump = abs(right.objective_value - left.objective_value)
        bound = 10.0 * max(abs(right.omega - left.omega) * (left.point.P + left.point.S), 1e-12)
        if jump > bound:
            log.info("objective jumps by %.3g between omega=%.6g and %.6g", jump, left.omega, right.omega)
