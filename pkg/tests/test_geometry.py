import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from uavhfl.errors import InvalidArgumentError, ZeroMassError
from uavhfl.geometry import (LOS, NLOS, ChannelParams, NetworkParams, Topology, associate,
                             conditional_state_pdf, exclusion_region, interferer_pdf_center,
                             interferer_pdf_offcenter, los_probability, nlos_probability,
                             sample_topology, state_branch_mass, support_limits)

A, B = 9.61, 0.16


def test_topology_table_sizes_inside_disk():
    topo = sample_topology(50, 10, 500, 120, seed=3)
    assert topo.devices.shape == (50, 2) and topo.uavs.shape == (10, 2)
    assert np.hypot(*topo.devices.T).max() <= 500
    assert np.hypot(*topo.uavs.T).max() <= 500


def test_topology_minimal():
    topo = sample_topology(1, 1, 1, 1, seed=0)
    assert np.hypot(*topo.devices[0]) <= 1 and np.hypot(*topo.uavs[0]) <= 1


def test_disk_second_moment():
    topo = sample_topology(100_000, 1, 500, 120, seed=11)
    m2 = np.mean(np.sum(topo.devices ** 2, axis=1))
    assert m2 == pytest.approx(500 ** 2 / 2, rel=0.01)


def test_topology_seed_reproducible_and_device_layout_independent_of_uavs():
    a = sample_topology(20, 5, 500, 120, seed=[4, 2])
    b = sample_topology(20, 5, 500, 120, seed=[4, 2])
    c = sample_topology(20, 9, 500, 120, seed=[4, 2])
    assert np.array_equal(a.devices, b.devices) and np.array_equal(a.uavs, b.uavs)
    assert np.array_equal(a.devices, c.devices)
    assert np.array_equal(a.uavs, c.uavs[:5])


@pytest.mark.parametrize("bad", [(0, 1, 1, 1), (1, 0, 1, 1), (1, 1, 0, 1), (1, 1, 1, -1)])
def test_topology_rejects_bad_args(bad):
    with pytest.raises(InvalidArgumentError):
        sample_topology(*bad, seed=0)


def test_topology_rejects_outside_points():
    with pytest.raises(InvalidArgumentError):
        Topology(10, 5, [[11, 0]], [[0, 0]])


def test_los_overhead():
    assert los_probability(120, 120, A, B) == pytest.approx(0.999975, abs=1e-6)


def test_los_grazing_limit():
    # zero-elevation closed form 1/(1 + a e^{ab}); r = 1e6 sits at 0.0069 deg
    hand = 1 / (1 + A * math.exp(B * A))
    assert hand == pytest.approx(0.02187, abs=5e-5)
    assert los_probability(1e6, 120, A, B) == pytest.approx(0.02187, abs=5e-5)


@given(st.floats(120, 1e5))
def test_los_nlos_complement(r):
    assert los_probability(r, 120, A, B) + nlos_probability(r, 120, A, B) == pytest.approx(1)


@given(st.floats(120, 5000), st.floats(1, 4000))
def test_los_decreasing_in_distance(r, dr):
    assert los_probability(r + dr, 120, A, B) <= los_probability(r, 120, A, B) + 1e-15


def test_los_rejects_short_distance():
    with pytest.raises(InvalidArgumentError):
        los_probability(100, 120, A, B)


def test_exclusion_region_values():
    assert exclusion_region(100, 2.0, 3.5) == pytest.approx(13.895, abs=1e-3)
    assert exclusion_region(100, 3.5, 2.0) == pytest.approx(3162.3, abs=0.1)
    assert exclusion_region(37.5, 2.0, 2.0) == 37.5


def test_offcenter_pdf_reduces_to_center():
    r = np.linspace(120, math.hypot(500, 120), 50)
    assert np.allclose(interferer_pdf_offcenter(r, 0.0, 500, 120),
                       interferer_pdf_center(r, 500, 120))


@given(st.floats(0, 500))
def test_offcenter_pdf_normalised(x0):
    w_m, w_p = support_limits(x0, 500, 120)
    f = lambda r: interferer_pdf_offcenter(r, x0, 500, 120)
    pts = [w_m] if 120 < w_m < w_p else None
    total, _ = integrate.quad(f, 120, w_p, points=pts, limit=200)
    assert total == pytest.approx(1, abs=1e-6)


def test_offcenter_pdf_matches_sampling():
    rng = np.random.default_rng(5)
    n = 100_000
    rho = 500 * np.sqrt(rng.random(n))
    phi = 2 * np.pi * rng.random(n)
    r = np.sqrt((rho * np.cos(phi) - 200) ** 2 + (rho * np.sin(phi)) ** 2 + 120 ** 2)
    w_m, w_p = support_limits(200, 500, 120)

    def cdf(x):
        x = np.atleast_1d(x)
        out = np.empty(x.size)
        for i, xi in enumerate(x):
            hi = min(max(xi, 120), w_p)
            a = integrate.quad(lambda q: interferer_pdf_offcenter(q, 200, 500, 120),
                               120, min(hi, w_m))[0]
            b = integrate.quad(lambda q: interferer_pdf_offcenter(q, 200, 500, 120),
                               w_m, hi)[0] if hi > w_m else 0.0
            out[i] = a + b
        return out

    grid = np.quantile(r, np.linspace(0.01, 0.99, 60))
    emp = np.searchsorted(np.sort(r), grid, side="right") / n
    assert np.max(np.abs(emp - cdf(grid))) <= 0.01


def test_center_pdf_values():
    d = math.hypot(500, 120)
    assert interferer_pdf_center(120, 500, 120) == pytest.approx(9.6e-4)
    assert (d ** 2 - 120 ** 2) / 500 ** 2 == pytest.approx(1)
    assert integrate.quad(lambda r: interferer_pdf_center(r, 500, 120), 120, d)[0] == \
        pytest.approx(1, abs=1e-9)


def test_conditional_state_pdf_normalised():
    for state in (LOS, NLOS):
        lower = 150.0
        _, w_p = support_limits(200, 500, 120)
        w_m, _ = support_limits(200, 500, 120)
        f = lambda r: conditional_state_pdf(r, state, lower, 200, 500, 120, A, B)
        total = integrate.quad(f, lower, w_m)[0] + integrate.quad(f, w_m, w_p)[0]
        assert total == pytest.approx(1, abs=1e-6)


def test_conditional_state_pdf_half_point():
    # where P_L = 1/2 the LoS branch integrand is half the base density
    from scipy.optimize import brentq
    r_half = brentq(lambda r: los_probability(r, 120, A, B) - 0.5, 121, 5000)
    mass = state_branch_mass(LOS, 120, 200, 500, 120, A, B)
    base = interferer_pdf_offcenter(r_half, 200, 500, 120)
    got = conditional_state_pdf(r_half, LOS, 120, 200, 500, 120, A, B) * mass
    assert got == pytest.approx(base / 2, rel=1e-9)


def test_conditional_state_pdf_zero_mass():
    _, w_p = support_limits(0, 500, 120)
    with pytest.raises(ZeroMassError):
        conditional_state_pdf(300, LOS, w_p + 1, 0, 500, 120, A, B)


def test_associate_single_uav():
    topo = sample_topology(30, 1, 500, 120, seed=2)
    asg = associate(topo, ChannelParams(), seed=2)
    assert np.all(asg.serving_uav == 0)
    expect = np.sqrt(np.sum((topo.devices - topo.uavs[0]) ** 2, axis=1) + 120 ** 2)
    assert np.allclose(asg.serving_distance_l, expect)


def test_associate_all_los_is_nearest():
    ch = ChannelParams(a=1e-9, b=0.0)     # P_L -> 1 everywhere
    topo = sample_topology(40, 8, 500, 120, seed=9)
    asg = associate(topo, ch, seed=9)
    assert asg.link_los.all()
    assert np.array_equal(asg.serving_uav, np.argmin(topo.device_uav_distances(), axis=1))


@given(st.integers(0, 2 ** 32 - 1))
def test_associate_serving_power_dominates(seed):
    ch = ChannelParams()
    topo = sample_topology(25, 6, 500, 120, seed=seed)
    asg = associate(topo, ch, seed=seed)
    dist = topo.device_uav_distances()
    alpha = np.where(asg.link_los, ch.alpha_los, ch.alpha_nlos)
    power = ch.p_uav * dist ** (-alpha)
    served = power[np.arange(25), asg.serving_uav]
    assert np.all(power <= served[:, None] * (1 + 1e-12))


def test_network_interferer_counts():
    net = NetworkParams()
    assert net.interferers_edge1 == 1.0
    assert net.interferers_edge2 == pytest.approx(50 / 15 - 1)
    assert net.interferers_back == 1.0
    assert net.interferers_direct == 1.5


def test_channel_params_validation():
    with pytest.raises(InvalidArgumentError):
        ChannelParams(m_los=1.5)
    with pytest.raises(InvalidArgumentError):
        ChannelParams(theta=0)
