import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavhfl.errors import InvalidArgumentError
from uavhfl.perf import (BoundInputs, UAVLatency, bound_delta_surface, bound_terms,
                         compute_b_terms, convergence_bound, convergence_bound_uniform,
                         improvement_condition, improvement_threshold, latency_compute,
                         latency_link, latency_round, max_learning_rate, period_ratio_limits,
                         uniform_terms)

ZERO = dict(upward_divergence=0.0, downward_divergence=0.0, global_divergence=0.0,
            initial_gap=0.0)


def test_b_terms_perfect_channels():
    assert compute_b_terms([1, 1], [1], [0.5, 0.5], [1.0], [[0, 1]]) == (0.0, 0.0, 0.0)


def test_b1_hand_value():
    b1, _, _ = compute_b_terms([1, 1], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5], [[0], [1]])
    assert b1 == pytest.approx(1.0)


@given(st.lists(st.floats(0.01, 1), min_size=4, max_size=4),
       st.lists(st.floats(0.01, 1), min_size=2, max_size=2))
def test_b_term_ordering(pe, pb):
    b1, b2, b3 = compute_b_terms(pe, pb, [0.25] * 4, [0.5, 0.5], [[0, 1], [2, 3]])
    assert b2 >= b3 - 1e-12 and b2 >= b1 - 1e-12


def test_bound_zero_for_ideal_inputs():
    assert convergence_bound(BoundInputs(**ZERO)) == 0.0
    assert convergence_bound_uniform(BoundInputs(**ZERO)) == 0.0


def test_bound_nondecreasing_on_grid():
    grid = [0.0, 0.5, 1.0, 2.0, 4.0]
    for axis in ("b1", "b2", "b3", "upward_divergence", "downward_divergence"):
        vals = []
        for g in grid:
            kw = dict(b_terms=(0.3, 0.6, 0.4))
            if axis.startswith("b"):
                bt = list(kw["b_terms"])
                bt[int(axis[1]) - 1] = g
                if axis != "b2":
                    bt[1] = max(bt[1], g)
                kw["b_terms"] = tuple(bt)
            else:
                kw[axis] = g
            vals.append(convergence_bound(BoundInputs(**kw)))
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:])), axis


def test_horizon_only_scales_gap_term():
    a = bound_terms(BoundInputs(horizon=100, b_terms=(0.2, 0.5, 0.3)))
    b = bound_terms(BoundInputs(horizon=200, b_terms=(0.2, 0.5, 0.3)))
    assert b["gap"] == pytest.approx(a["gap"] / 2)
    assert all(a[k] == b[k] for k in a if k != "gap")


def test_alternate_constants_change_only_channel_terms():
    inp = BoundInputs(b_terms=(0.5, 0.8, 0.3), grad_bound_uav=2.0, grad_bound_device=3.0)
    a, b = bound_terms(inp), bound_terms(inp, appendix_constants=True)
    assert b["channel_uav"] == pytest.approx(4 * 0.5 * 2.0)
    assert b["channel_device"] == pytest.approx(4 * 0.8 * 3.0)
    assert a["channel_uav"] == pytest.approx(4 * 0.25 * 2.0)
    assert {k for k in a if a[k] != b[k]} == {"channel_uav", "channel_device"}


def test_step_size_guard():
    limit = max_learning_rate(2, 1.0)
    assert limit == pytest.approx(1 / (8 * math.sqrt(3)))
    with pytest.raises(InvalidArgumentError):
        BoundInputs(learning_rate=limit, global_period=2)
    BoundInputs(learning_rate=limit * 0.999, global_period=2)


def test_uniform_mix_weight_one_when_one_sample_per_uav():
    inp = BoundInputs(total_samples=10, n_uavs=10, **{**ZERO, "global_divergence": 1.0})
    t = uniform_terms(inp)
    c = 112 / 5
    assert t["divergence"] == pytest.approx(5 * c * inp.learning_rate ** 2 * 4)


@given(st.floats(0, 5), st.floats(0, 5))
def test_uniform_bound_monotone_in_global_divergence(a, d):
    lo = convergence_bound_uniform(BoundInputs(global_divergence=a))
    hi = convergence_bound_uniform(BoundInputs(global_divergence=a + d))
    assert hi >= lo - 1e-15


def test_condition_boundary_at_zero():
    assert improvement_threshold(0.0, 0.0, 1.0, 10, 10_000) == 0.0
    assert improvement_condition(0.0, 0.0, 0.0, 1.0, 10, 10_000)


def test_condition_low_terms_pass_high_fail():
    args = dict(global_divergence=50.0, grad_bound_device=1.0, n_uavs=10, total_samples=10_000)
    assert improvement_condition(0.0, 0.0, **args)
    assert not improvement_condition(3.0, 3.0, **args)


def test_condition_matches_bound_difference():
    # with zero global divergence the condition is exactly the sign of the
    # uniform-bound change when (G, E) -> (l G, q_max(l) E)
    nu, n = 10, 10_000
    l_max, q_max = period_ratio_limits(nu, n, 1.0)
    base = BoundInputs(global_divergence=0.0, n_uavs=nu, total_samples=n, learning_rate=0.001,
                       b_terms=(0.0, 0.0, 0.0))
    grid = np.linspace(0.0, 3.0, 7)
    for l in (1.5, 3.0, 6.0):
        q = q_max(l)
        delta = bound_delta_surface(grid, grid, base, l, q)
        for (i, b2), (j, b3) in itertools.product(enumerate(grid), enumerate(grid)):
            cond = improvement_condition(b2, b3, 0.0, base.grad_bound_device, nu, n)
            assert cond == (delta[i, j] <= 1e-15), (l, b2, b3)


def test_condition_undefined_cases():
    with pytest.raises(InvalidArgumentError):
        improvement_threshold(1.0, 1.0, 1.0, 10, 20)
    with pytest.raises(InvalidArgumentError):
        improvement_threshold(1.0, 1.0, 1.0, 10, 10)


def test_latency_hand_values():
    assert latency_compute(20, 1000, 2e9) == 1e-5
    assert latency_compute(20, 0, 2e9) == 0.0
    assert latency_link(1e6, 1e6, 1.0) == 1.0
    assert latency_link(2e6, 1e6, 1.0) == 2.0
    assert latency_link(1e6, 1e6, math.inf) == 0.0
    assert latency_link(1e6, 1e6, 1e300) < 1e-2
    assert latency_link(1e6, 1e6, 0.0) == math.inf


def test_round_latency_single_cluster():
    c = UAVLatency(downlink=[0.2], uplink=[0.3], backhaul=0.5, compute=[0.01])
    assert latency_round([c], 2, 4) == pytest.approx(2 * 0.2 + 2 * 0.3 + 0.5 + 4 * 0.01)


def test_round_latency_slowest_dominates():
    base = UAVLatency(downlink=[0.1, 0.4], uplink=[0.1, 0.1], backhaul=0.2, compute=[0, 0])
    slower_max = UAVLatency(downlink=[0.1, 0.6], uplink=[0.1, 0.1], backhaul=0.2, compute=[0, 0])
    slower_min = UAVLatency(downlink=[0.3, 0.4], uplink=[0.1, 0.1], backhaul=0.2, compute=[0, 0])
    assert latency_round([slower_max], 1, 1) > latency_round([base], 1, 1)
    assert latency_round([slower_min], 1, 1) == latency_round([base], 1, 1)
