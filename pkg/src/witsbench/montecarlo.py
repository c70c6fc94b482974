"""Monte Carlo simulation of the two-stage system.

Random draws come from a Philox counter-based generator keyed by
(seed, batch index), so a batch produces the same numbers whether it runs
alone, serially, or on a worker thread. Batch sums are merged in batch order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_int
from .costs import conditional_mean
from .strategies import Linear, ProblemConfig, TwoPoint, Zero, apply_gamma1, lope_params_of

EXACT_MMSE = "exact_mmse"
IDENTITY = "identity"


@dataclass(frozen=True)
class SimConfig:
    samples: int = 1_000_000
    seed: int = 0
    batch: int = 100_000
    antithetic: bool = False

    def __post_init__(self):
        check_positive_int(self.samples, "samples")
        check_positive_int(self.batch, "batch")
        if self.samples < 1000:
            raise ValueError(f"at least 1000 samples are required, got {self.samples}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.antithetic and self.batch % 2:
            raise ValueError("antithetic sampling needs an even batch size")


@dataclass(frozen=True)
class SimResult:
    P_hat: float
    P_stderr: float
    S_hat: float
    S_stderr: float
    samples: int
    seed: int


class UnsupportedDecoderError(ValueError):
    pass


def batch_generator(seed, index):
    """Generator for batch ``index`` of stream ``seed``."""
    key = np.array([int(seed), int(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _batch_sizes(sim):
    full, rest = divmod(sim.samples, sim.batch)
    sizes = [sim.batch] * full
    if rest:
        sizes.append(rest + (rest % 2 if sim.antithetic else 0))
    return sizes


def _draw(sim, cfg, index, size):
    rng = batch_generator(sim.seed, index)
    if sim.antithetic:
        half = size // 2
        x0 = math.sqrt(cfg.Q) * rng.standard_normal(half)
        z1 = math.sqrt(cfg.N) * rng.standard_normal(half)
        return np.concatenate([x0, -x0]), np.concatenate([z1, -z1])
    x0 = math.sqrt(cfg.Q) * rng.standard_normal(size)
    z1 = math.sqrt(cfg.N) * rng.standard_normal(size)
    return x0, z1


def mmse_decoder(s, cfg: ProblemConfig):
    """Exact conditional-mean decoder y -> E[X1 | Y1 = y] for strategy ``s``."""
    p = lope_params_of(s)
    if p is not None:
        return lambda y: conditional_mean(p, cfg, y)
    if isinstance(s, Linear):
        if s.P >= cfg.Q:
            level = math.sqrt(s.P - cfg.Q)
            return lambda y: np.full_like(np.asarray(y, dtype=float), level)
        var = (math.sqrt(cfg.Q) - math.sqrt(s.P)) ** 2
        gain = var / (var + cfg.N)
        return lambda y: gain * np.asarray(y, dtype=float)
    if isinstance(s, TwoPoint):
        # posterior of X1 in {-a, +a} with equal priors
        return lambda y: s.a * np.tanh(s.a * np.asarray(y, dtype=float) / cfg.N)
    raise UnsupportedDecoderError(f"no exact MMSE decoder for {s!r}")


def _resolve_decoder(s, cfg, decoder):
    if callable(decoder):
        return decoder
    if decoder == EXACT_MMSE:
        return mmse_decoder(s, cfg)
    if decoder == IDENTITY:
        return lambda y: y
    raise UnsupportedDecoderError(f"unknown decoder {decoder!r}")


def _moments(v, antithetic):
    # with antithetic pairs the independent units are pair means
    if antithetic:
        h = v.size // 2
        v = 0.5 * (v[:h] + v[h:])
    return v.size, float(v.sum()), float((v * v).sum())


def _resolve_threads(threads):
    if threads is None:
        env = os.environ.get("WITSBENCH_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def simulate(s, cfg: ProblemConfig, sim: SimConfig | None = None, decoder=EXACT_MMSE, threads=None) -> SimResult:
    """Empirical power and estimation cost of ``s`` with standard errors.

    ``decoder`` is ``"exact_mmse"``, ``"identity"`` or any callable mapping
    an array of observations to estimates of x1.
    """
    sim = sim or SimConfig()
    dec = _resolve_decoder(s, cfg, decoder)
    sizes = _batch_sizes(sim)

    def run(index):
        x0, z1 = _draw(sim, cfg, index, sizes[index])
        u1 = apply_gamma1(s, x0, cfg)
        x1 = x0 + u1
        y1 = x1 + z1
        err = x1 - dec(y1)
        return _moments(u1 * u1, sim.antithetic), _moments(err * err, sim.antithetic)

    threads = _resolve_threads(threads)
    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]

    def reduce(which):
        m = sum(p[which][0] for p in parts)
        total = math.fsum(p[which][1] for p in parts)
        total_sq = math.fsum(p[which][2] for p in parts)
        mean = total / m
        var = max(total_sq / m - mean * mean, 0.0) * m / (m - 1)
        return mean, math.sqrt(var / m)

    P_hat, P_se = reduce(0)
    S_hat, S_se = reduce(1)
    return SimResult(P_hat, P_se, S_hat, S_se, samples=sum(sizes), seed=int(sim.seed))


@dataclass(frozen=True)
class StateHistogram:
    edges: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    mass_inside: float

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def empirical_state_histogram(s, cfg: ProblemConfig, sim: SimConfig, bins: int, range: tuple) -> StateHistogram:
    """Histogram of simulated x1, normalized by the total sample count and bin width.

    ``stderr`` is the binomial standard error of each bin's density.
    """
    bins = check_positive_int(bins, "bins")
    lo, hi = float(range[0]), float(range[1])
    if not hi > lo:
        raise ValueError(f"empty histogram range ({lo}, {hi})")
    edges = np.linspace(lo, hi, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    sizes = _batch_sizes(sim)
    for index, size in enumerate(sizes):
        x0, _ = _draw(sim, cfg, index, size)
        c, _ = np.histogram(x0 + apply_gamma1(s, x0, cfg), bins=edges)
        counts += c
    m = sum(sizes)
    width = np.diff(edges)
    frac = counts / m
    return StateHistogram(
        edges=edges,
        density=frac / width,
        stderr=np.sqrt(frac * (1.0 - frac) / m) / width,
        mass_inside=float(frac.sum()),
    )
