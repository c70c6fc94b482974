import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from witsbench.costs import CostPoint, estimation_cost, power_cost
from witsbench.optimizer import (
    OptimizerOptions,
    SweepOptions,
    WeightedObjective,
    cold_starts,
    decode,
    encode,
    evaluate_objective,
    flag_dominated,
    k_squared,
    omega_from_k_squared,
    optimize_at,
    optimize_at_power,
    parse_omega_grid,
    rescale_to_power,
    sweep,
)
from witsbench.strategies import LopeParams, ProblemConfig

CFG = ProblemConfig(1.0, 0.1)
QUICK = OptimizerOptions(restarts=3, max_iters=400, x_tol=1e-6, f_tol=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0, 2), min_size=n, max_size=n),
    st.lists(st.floats(0, 2), min_size=n - 1, max_size=n - 1),
)))
def test_encode_decode_round_trip(incs):
    da, dB = incs
    p = LopeParams(np.cumsum(da), np.concatenate([[0.0], np.cumsum(dB)]))
    q = decode(encode(p), p.n)
    np.testing.assert_allclose(q.a, p.a, atol=1e-12)
    np.testing.assert_allclose(q.B, p.B, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=7, max_size=7))
def test_every_free_vector_decodes_to_a_feasible_controller(z):
    p = decode(z, 4)  # LopeParams validates the ordering constraints
    assert p.a[0] >= 0 and p.B[0] == 0


def test_decode_rejects_wrong_length():
    with pytest.raises(ValueError):
        decode(np.zeros(4), 2)


@pytest.mark.parametrize("omega, k2", [(0.0, 0.0), (0.5, 1.0), (0.8, 4.0), (1.0, math.inf)])
def test_k_squared_conversion(omega, k2):
    assert k_squared(omega) == pytest.approx(k2)
    assert omega_from_k_squared(k_squared(omega)) == pytest.approx(omega)


def test_objective_examples():
    zero = np.zeros(3)
    assert evaluate_objective(zero, WeightedObjective(0.5, 2, CFG)) == pytest.approx(0.5 / 11, abs=1e-10)
    fp = encode(LopeParams([0.4], [0.0]))
    S = estimation_cost(LopeParams([0.4], [0.0]), CFG).S
    assert evaluate_objective(fp, WeightedObjective(0.3, 1, CFG)) == pytest.approx(0.3 * 0.16 + 0.7 * S, rel=1e-14)
    fp2 = encode(LopeParams([0.3, 0.6], [0.0, 1.0]))
    assert evaluate_objective(fp2, WeightedObjective(1.0, 2, CFG)) == pytest.approx(
        power_cost(LopeParams([0.3, 0.6], [0.0, 1.0]), CFG), rel=1e-14)


def test_pure_power_weight_drives_amplitudes_to_zero():
    rec = optimize_at(WeightedObjective(1.0, 2, CFG), QUICK)
    assert rec.point.P <= 1e-8


def test_free_power_beats_doing_nothing():
    rec = optimize_at(WeightedObjective(0.01, 1, CFG), QUICK)
    assert rec.point.S < 0.0909


def test_record_reproduces_from_stored_params():
    obj = WeightedObjective(0.2, 2, CFG)
    rec = optimize_at(obj, QUICK)
    again = estimation_cost(rec.params, CFG)
    assert obj.combine(again) == pytest.approx(rec.objective_value, abs=1e-10)
    assert rec.k_squared == pytest.approx(0.25)


def test_optimization_is_deterministic_across_thread_counts():
    obj = WeightedObjective(0.2, 2, CFG)
    a = optimize_at(obj, QUICK)
    b = optimize_at(obj, replace(QUICK, threads=3))
    assert a.params == b.params
    assert a.objective_value == b.objective_value


def test_cold_starts_are_feasible_and_fixed():
    first = cold_starts(4, CFG)
    assert len(first) == 8
    assert first == cold_starts(4, CFG)


def test_warm_start_is_padded_and_never_worse():
    obj1 = WeightedObjective(0.15, 1, CFG)
    one = optimize_at(obj1, QUICK)
    two = optimize_at(WeightedObjective(0.15, 2, CFG), OptimizerOptions(max_iters=400, init=one.params))
    assert two.objective_value <= one.objective_value + 1e-10


def test_power_constrained_mode_hits_the_budget():
    rec = optimize_at_power(2, 0.3, CFG, opts=QUICK)
    assert rec.point.P == pytest.approx(0.3, rel=1e-12)
    assert math.isnan(rec.omega)
    assert rec.point.S < estimation_cost(rescale_to_power(LopeParams([1.0], [0.0]), 0.3, CFG), CFG).S + 1e-12


def test_rescale_handles_all_zero_amplitudes():
    p = rescale_to_power(LopeParams([0.0, 0.0], [0.0, 1.0]), 0.25, CFG)
    assert power_cost(p, CFG) == pytest.approx(0.25)


@pytest.mark.parametrize("text, expected", [("0:1:5", [0, 0.25, 0.5, 0.75, 1]), ("0.1,0.3", [0.1, 0.3])])
def test_parse_omega_grid(text, expected):
    np.testing.assert_allclose(parse_omega_grid(text), expected)


@pytest.mark.parametrize("text", ["0:1", "0:2:3", "a,b", "0:1:0"])
def test_parse_omega_grid_rejects(text):
    with pytest.raises(ValueError):
        parse_omega_grid(text)


def test_dominance_flags():
    recs = [SimpleNamespace(point=CostPoint(P, S), dominated=False) for P, S in [(0.1, 0.08), (0.2, 0.09), (0.3, 0.05)]]
    flag_dominated(recs)
    assert [r.dominated for r in recs] == [False, True, False]


def test_one_step_sweep_endpoints_and_monotone_power():
    result = sweep(1, CFG, parse_omega_grid("0.05:1:8"), SweepOptions(QUICK, refine_rounds=0))
    P = result.P
    assert np.all(np.diff(P) <= 1e-6)
    assert result.records[-1].point.P == pytest.approx(0.0, abs=1e-8)
    assert result.records[-1].point.S == pytest.approx(1 / 11, abs=1e-6)
    for r in result:
        assert r.objective_value == pytest.approx(r.omega * r.point.P + (1 - r.omega) * r.point.S, abs=1e-10)
    assert len(result.pareto()) >= 1


def test_sweep_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        sweep(1, CFG, [0.5, 0.2])


@pytest.mark.slow
def test_nesting_two_into_four_steps():
    two = optimize_at(WeightedObjective(0.1, 2, CFG), OptimizerOptions(max_iters=1500))
    four = optimize_at(WeightedObjective(0.1, 4, CFG), OptimizerOptions(max_iters=1500, init=two.params))
    assert four.objective_value <= two.objective_value + 1e-12
