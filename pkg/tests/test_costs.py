import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from witsbench._quadrature import QuadratureError, adaptive_gk15
from witsbench.costs import (
    QuadratureConfig,
    closed_form_cost,
    conditional_mean,
    decoder_second_moment,
    estimation_cost,
    fe_terms,
    gaussian_envelope,
    linear_cost,
    linear_cost_slope,
    observation_density,
    power_cost,
    state_second_moment,
    two_point_costs,
)
from witsbench.gaussian import GaussianIntegralParams, integral_I1, integral_I2
from witsbench.strategies import Bpsk, Linear, LopeParams, ProblemConfig, TwoPoint, Zero, segment_probabilities

CFG = ProblemConfig(1.0, 0.1)

# Frozen from nested scipy quadrature of E[X1^2] - E[E[X1|Y1]^2] built directly
# from the joint density of (X0, Z1); it shares no code with the package.
ORACLE = [
    # (a, B, Q, N, P, S)
    ([0.4], [0.0], 1.0, 0.1, 0.16, 0.0804937925748121),
    ([1.0], [0.0], 1.0, 0.1, 1.0, 0.07733235481664025),
    ([0.2, 0.5], [0.0, 0.8], 1.0, 0.1, 0.1289792674050266, 0.0798526771710435),
    ([0.1, 0.6, 1.3], [0.0, 0.5, 1.2], 1.0, 1.0, 0.5320615998979348, 0.11029560958719165),
    ([0.3, 0.9], [0.0, 1.0], 2.0, 0.5, 0.43524008797460656, 0.2758592497234845),
]

@pytest.mark.parametrize("a, B, Q, N, P, S", ORACLE)
def test_estimation_cost_against_independent_quadrature(a, B, Q, N, P, S):
    point = estimation_cost(LopeParams(a, B), ProblemConfig(Q, N))
    assert point.P == pytest.approx(P, rel=1e-12)
    assert point.S == pytest.approx(S, abs=1e-9)


@pytest.mark.parametrize("Q, N, expected", [(1.0, 0.1, 0.0909090909090909), (2.0, 0.5, 0.4)])
@pytest.mark.parametrize("B", [[0.0], [0.0, 0.7], [0.0, 0.2, 2.0]])
def test_zero_amplitudes_give_the_no_control_cost(Q, N, expected, B):
    point = estimation_cost(LopeParams([0.0] * len(B), B), ProblemConfig(Q, N))
    assert point.P == 0.0
    assert point.S == pytest.approx(expected, abs=1e-8)


def test_power_examples():
    assert power_cost(LopeParams([0.4], [0.0]), ProblemConfig(3.0, 0.1)) == pytest.approx(0.16, rel=1e-15)
    assert power_cost(LopeParams([0.0, 0.0], [0.0, 1.0]), CFG) == 0.0
    p = LopeParams([0.3, 0.6], [0.0, 1.0])
    probs = segment_probabilities(p, CFG)
    assert power_cost(p, CFG) == pytest.approx(2 * (0.09 * probs[0] + 0.36 * probs[1]), rel=1e-15)


@pytest.mark.parametrize("y", [-2.3, -0.4, 0.0, 0.9, 3.7])
def test_fe_terms_against_quadrature_and_lemma(y):
    p = LopeParams([0.1, 0.6, 1.3], [0.0, 0.5, 1.2])
    cfg = ProblemConfig(1.3, 0.4)
    t = fe_terms(p, cfg, y)
    sq, sn = math.sqrt(cfg.Q), math.sqrt(cfg.N)
    hi = p.upper_breakpoints
    for i in range(p.n):
        a, lo, up = p.a[i], p.B[i], hi[i]
        for x0_lo, x0_hi, shift, F, E in (
            (-up, -lo, a, t.F_neg[i], t.E_neg[i]),
            (lo, up, -a, t.F_pos[i], t.E_pos[i]),
        ):
            def f(x0, k):
                x1 = x0 + shift
                return x1**k * stats.norm.pdf(x0, 0, sq) * stats.norm.pdf(y - x1, 0, sn)

            lo_, hi_ = max(x0_lo, -15), min(x0_hi, 15)
            refF = integrate.quad(f, lo_, hi_, args=(0,), epsabs=1e-15, epsrel=1e-12)[0]
            refE = integrate.quad(f, lo_, hi_, args=(1,), epsabs=1e-15, epsrel=1e-12)[0]
            assert F == pytest.approx(refF, rel=1e-9, abs=1e-15)
            assert E == pytest.approx(refE, rel=1e-9, abs=1e-15)

            # second route: the integrand is exp(-alpha x0^2 + beta x0 + gamma)
            alpha = 0.5 / cfg.Q + 0.5 / cfg.N
            beta = (y - shift) / cfg.N
            gamma = -((y - shift) ** 2) / (2 * cfg.N) - math.log(2 * math.pi * sq * sn)
            g = GaussianIntegralParams(alpha, beta, gamma, x0_lo, x0_hi)
            assert F == pytest.approx(integral_I1(g), rel=1e-12, abs=1e-300)
            assert E == pytest.approx(integral_I2(g) + shift * integral_I1(g), rel=1e-9, abs=1e-15)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(0, 1.5), min_size=1, max_size=4), st.floats(0.2, 3), st.floats(0.05, 2))
def test_observation_density_normalizes(incs, Q, N):
    n = len(incs)
    p = LopeParams(np.cumsum(incs), np.concatenate([[0.0], np.cumsum(incs[1:]) + 0.1 * np.arange(1, n)]))
    cfg = ProblemConfig(Q, N)
    half = p.a[-1] + 12 * math.sqrt(Q + N)
    total, _ = adaptive_gk15(lambda y: observation_density(p, cfg, y), -half, half, abs_tol=1e-12, rel_tol=1e-11)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_conditional_mean_examples():
    zero = LopeParams([0.0], [0.0])
    assert observation_density(zero, CFG, 1.0) == pytest.approx(stats.norm.pdf(1.0, 0, math.sqrt(1.1)), rel=1e-14)
    assert conditional_mean(zero, CFG, 1.1) == pytest.approx(1.0, rel=1e-14)
    p = LopeParams([0.2, 0.7], [0.0, 0.9])
    assert conditional_mean(p, CFG, 0.0) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-6, 6))
def test_conditional_mean_is_odd(y):
    p = LopeParams([0.2, 0.7], [0.0, 0.9])
    assert conditional_mean(p, CFG, -y) == pytest.approx(-conditional_mean(p, CFG, y), abs=1e-13)


def test_conditional_mean_against_windowed_sampling():
    p = LopeParams([0.2, 0.7], [0.0, 0.9])
    rng = np.random.default_rng(21)
    y0, delta = 0.5, 1e-2
    hits = []
    for _ in range(10):
        x0 = rng.standard_normal(1_000_000)
        a = np.where(np.abs(x0) < 0.9, 0.2, 0.7)
        x1 = x0 - np.where(x0 >= 0, a, -a)
        y = x1 + math.sqrt(0.1) * rng.standard_normal(x0.size)
        hits.append(x1[np.abs(y - y0) < delta])
    sel = np.concatenate(hits)
    se = sel.std() / math.sqrt(sel.size)
    # window width adds O(delta^2) bias, far below se here
    assert abs(sel.mean() - conditional_mean(p, CFG, y0)) < 4 * se


def test_conditional_mean_far_tail_is_finite():
    p = LopeParams([0.2, 0.7], [0.0, 0.9])
    far = conditional_mean(p, CFG, np.array([-80.0, 80.0]))
    np.testing.assert_allclose(far, [-(80 - 0.7 * 0.1) / 1.1, (80 - 0.7 * 0.1) / 1.1])


def test_second_moment_matches_sampling():
    p = LopeParams([0.3, 0.9], [0.0, 1.0])
    x0 = np.random.default_rng(2).standard_normal(1_000_000)
    a = np.where(np.abs(x0) < 1.0, 0.3, 0.9)
    x1 = x0 - np.where(x0 >= 0, a, -a)
    se = np.std(x1 * x1) / math.sqrt(x1.size)
    assert abs(np.mean(x1 * x1) - state_second_moment(p, CFG)) < 4 * se


def test_padding_leaves_costs_unchanged():
    p = LopeParams([0.2, 0.5], [0.0, 0.8])
    base = estimation_cost(p, CFG)
    padded = estimation_cost(p.padded(4), CFG)
    assert padded.P == pytest.approx(base.P, abs=1e-10)
    assert padded.S == pytest.approx(base.S, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0, 1.5), min_size=1, max_size=3), st.lists(st.floats(0.05, 1.5), min_size=2, max_size=2))
def test_estimation_cost_bounds(incs, bincs):
    n = len(incs)
    p = LopeParams(np.cumsum(incs), np.concatenate([[0.0], np.cumsum(bincs)[: n - 1]]))
    point = estimation_cost(p, CFG)
    # MMSE never beats zero error and never loses to the constant estimate 0
    assert -1e-9 <= point.S <= state_second_moment(p, CFG) + 1e-9
    assert point.S <= CFG.N + 1e-9


def test_bpsk_examples():
    assert closed_form_cost(Bpsk(0.4), CFG).P == pytest.approx(0.16)
    assert closed_form_cost(Bpsk(0.0), CFG).S == pytest.approx(1 / 11, abs=1e-10)


def test_quadrature_failure_carries_partial_estimate():
    qc = QuadratureConfig(abs_tol=1e-30, rel_tol=1e-30, max_subdivisions=5)
    with pytest.raises(QuadratureError) as info:
        decoder_second_moment(LopeParams([0.4], [0.0]), CFG, qc)
    assert 0.3 < info.value.estimate < 0.6


def test_quadrature_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(tail_sigmas=5.0)
    with pytest.raises(ValueError):
        QuadratureConfig(abs_tol=0.0)


# --- linear baseline and envelope ---


@pytest.mark.parametrize("P, S", [(0.0, 0.0909090909), (1.0, 0.0), (0.25, 0.0714285714), (2.0, 0.0)])
def test_linear_cost_examples(P, S):
    assert linear_cost(P, CFG) == pytest.approx(S, abs=1e-10)


def test_linear_cost_matches_sampled_linear_policy():
    rng = np.random.default_rng(4)
    x0 = rng.standard_normal(1_000_000)
    x1 = 0.5 * x0  # P = 0.25
    y = x1 + math.sqrt(0.1) * rng.standard_normal(x0.size)
    err = (x1 - 0.25 / 0.35 * y) ** 2
    assert abs(err.mean() - linear_cost(0.25, CFG)) < 4 * err.std() / math.sqrt(err.size)


@pytest.mark.parametrize("P", [1e-6, 1e-3, 0.05, 0.3, 0.9])
def test_linear_slope_matches_finite_difference(P):
    h = 1e-4 * P
    fd = (linear_cost(P + h, CFG) - linear_cost(P - h, CFG)) / (2 * h)
    assert linear_cost_slope(P, CFG) == pytest.approx(fd, rel=1e-6)


def slope_growth(k):
    return abs(linear_cost_slope(10.0 ** (-2 * (k + 1)), CFG)) / abs(linear_cost_slope(10.0 ** (-2 * k), CFG))


@pytest.mark.xfail(strict=True, reason="the first step from P=1e-2 to 1e-4 grows by 7.8, not 9")
def test_linear_slope_grows_ninefold_per_hundredfold_drop_from_1e_2():
    assert all(slope_growth(k) >= 9 for k in range(1, 5))


def test_linear_slope_growth_approaches_tenfold():
    growth = [slope_growth(k) for k in range(1, 5)]
    assert growth == sorted(growth)
    assert growth[0] == pytest.approx(7.808, abs=1e-3)
    assert all(g >= 9 for g in growth[1:])
    assert growth[-1] == pytest.approx(10.0, abs=0.01)


def test_envelope_endpoints_and_domination():
    assert gaussian_envelope(0.0, CFG) == pytest.approx(0.0909090909, abs=1e-10)
    assert gaussian_envelope(1.0, CFG) == 0.0
    assert gaussian_envelope(0.171, CFG) <= linear_cost(0.171, CFG)
    grid = np.linspace(0, 1, 201)
    env = np.array([gaussian_envelope(P, CFG) for P in grid])
    lin = np.array([linear_cost(P, CFG) for P in grid])
    assert np.all(env <= lin + 1e-12)
    assert np.all(np.diff(env, 2) >= -1e-10)  # convex


def test_two_point_cost_against_scipy():
    a = 0.8
    point = two_point_costs(a, CFG)
    sd = math.sqrt(0.1)
    ref = integrate.quad(lambda z: stats.norm.pdf(z, 0, sd) * (a - a * math.tanh(a * (a + z) / 0.1)) ** 2, -np.inf, np.inf,
                         epsabs=1e-14)[0]
    assert point.S == pytest.approx(ref, rel=1e-8)
    assert point.P == pytest.approx(1 - 1.6 * math.sqrt(2 / math.pi) + 0.64, rel=1e-15)


def test_closed_form_dispatch():
    assert closed_form_cost(Zero(), CFG).S == pytest.approx(1 / 11)
    assert closed_form_cost(Linear(0.25), CFG).S == pytest.approx(0.0714285714)
    assert closed_form_cost(TwoPoint(0.0), CFG).S == 0.0
    with pytest.raises(TypeError):
        closed_form_cost(object(), CFG)
