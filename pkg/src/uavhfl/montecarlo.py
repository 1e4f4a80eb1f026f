"""Channel realizations, SINR evaluation and empirical success frequencies.

Two oracles live here:

* ``realize_round`` draws one block-fading realization of the whole network
  (fading, LoS states, RB allocation) and is what training consumes.
* ``empirical_success`` estimates a link's success probability for a tagged
  node. In the default ``"spatial"`` mode every trial keeps the tagged link
  geometry and redraws the positions of co-channel interferers, which is the
  expectation the analytic formulas describe. ``"network"`` mode reuses the
  fixed topology and calls ``realize_round`` per trial.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .geometry import (
    LOS,
    NLOS,
    ClusterAssignment,
    NetworkParams,
    Topology,
    los_probability,
    sample_disk,
)

CHUNK = 10_000
LINKS = ("edge", "back", "direct")


def sample_nakagami_power(m, rng: np.random.Generator, size=None):
    """Unit-mean Gamma(m, 1/m) power gain."""
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr < 1):
        raise InvalidArgumentError("Nakagami shape must be >= 1")
    return rng.gamma(m_arr, 1.0 / m_arr, size=size)


def allocate_rbs(n_transmitters: int, n_rbs: int, rng: np.random.Generator) -> np.ndarray:
    """Balanced random allocation: a shuffled transmitter list dealt
    round-robin over a shuffled RB list."""
    if n_transmitters < 1 or n_rbs < 1:
        raise InvalidArgumentError("counts must be >= 1")
    order = rng.permutation(n_transmitters)
    rb_order = rng.permutation(n_rbs)
    out = np.empty(n_transmitters, dtype=np.int64)
    out[order] = rb_order[np.arange(n_transmitters) % n_rbs]
    return out


def cochannel_counts(rbs: np.ndarray) -> np.ndarray:
    """Number of other transmitters sharing each transmitter's RB."""
    _, inverse, counts = np.unique(rbs, return_inverse=True, return_counts=True)
    return counts[inverse] - 1


def _sample_cochannel_count(n_transmitters: int, n_rbs: int, rng, size: int) -> np.ndarray:
    # Marginal of cochannel_counts for one tagged transmitter under allocate_rbs:
    # its slot in the shuffled order is uniform, its RB group size follows.
    slot = rng.integers(0, n_transmitters, size=size)
    group = slot % n_rbs
    size_of_group = (n_transmitters - group + n_rbs - 1) // n_rbs
    return size_of_group - 1


def _sinr(signal, interference, noise):
    denom = interference + noise
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 0, signal / np.where(denom > 0, denom, 1.0), np.inf)
    return out


@dataclass
class ChannelRealization:
    link_los: np.ndarray
    backhaul_los: np.ndarray
    rb_downlink: np.ndarray
    rb_uplink: np.ndarray
    rb_backhaul: np.ndarray
    rb_direct: np.ndarray
    sinr_edge1: np.ndarray
    sinr_edge2: np.ndarray
    sinr_back: np.ndarray
    sinr_direct: np.ndarray

    def edge_indicator(self, theta: float) -> np.ndarray:
        # joint downlink and uplink success
        return (self.sinr_edge1 > theta) & (self.sinr_edge2 > theta)

    def back_indicator(self, theta: float) -> np.ndarray:
        return self.sinr_back > theta

    def direct_indicator(self, theta: float) -> np.ndarray:
        return self.sinr_direct > theta


def realize_round(topology: Topology, assignment: ClusterAssignment, net: NetworkParams,
                  rng: np.random.Generator, los_policy: str = "resample") -> ChannelRealization:
    """One block-fading realization of every link in the network.

    ``los_policy="fixed"`` reuses the LoS states drawn at association time;
    ``"resample"`` redraws them (clusters stay fixed either way).
    """
    if los_policy not in ("fixed", "resample"):
        raise InvalidArgumentError(f"unknown los_policy {los_policy!r}")
    ch, res = net.channel, net.resources
    h = topology.height
    n_d, n_u = topology.n_devices, topology.n_uavs
    dist = topology.device_uav_distances()
    g = topology.uav_bs_distances()
    q = topology.device_bs_distances()
    serving = assignment.serving_uav
    rows = np.arange(n_d)

    if los_policy == "fixed":
        link_los = np.asarray(assignment.link_los, dtype=bool)
        back_los = np.asarray(assignment.backhaul_los_state, dtype=bool)
    else:
        link_los = rng.random(dist.shape) < los_probability(dist, h, ch.a, ch.b)
        back_los = rng.random(g.shape) < los_probability(g, h, ch.a, ch.b)

    alpha = np.where(link_los, ch.alpha_los, ch.alpha_nlos)
    m = np.where(link_los, ch.m_los, ch.m_nlos)
    gain = dist ** (-alpha)
    fade_down = sample_nakagami_power(m, rng)
    fade_up = sample_nakagami_power(m, rng)

    # UAV -> device downlink
    rb_down = allocate_rbs(n_u, res.rb_bs, rng)
    rx_down = ch.p_uav * fade_down * gain  # (n_d, n_u)
    same_rb = rb_down[None, :] == rb_down[serving][:, None]
    same_rb[rows, serving] = False
    sig1 = rx_down[rows, serving]
    int1 = (rx_down * same_rb).sum(axis=1)

    # device -> UAV uplink, each cluster shares M_u RBs among its members
    rb_up = np.empty(n_d, dtype=np.int64)
    for u in range(n_u):
        members = np.flatnonzero(serving == u)
        if members.size:
            rb_up[members] = allocate_rbs(members.size, res.rb_uav, rng)
    rx_up = ch.p_device * fade_up * gain  # transmitter k' towards UAV u
    cochan = rb_up[:, None] == rb_up[None, :]  # (k, k')
    np.fill_diagonal(cochan, False)
    sig2 = rx_up[rows, serving]
    int2 = (cochan * rx_up[:, serving].T).sum(axis=1)

    # UAV -> BS backhaul
    rb_back = allocate_rbs(n_u, res.rb_bs, rng)
    b_alpha = np.where(back_los, ch.alpha_los, ch.alpha_nlos)
    b_m = np.where(back_los, ch.m_los, ch.m_nlos)
    rx_back = ch.p_uav * sample_nakagami_power(b_m, rng) * g ** (-b_alpha)
    back_co = rb_back[:, None] == rb_back[None, :]
    np.fill_diagonal(back_co, False)
    int_b = back_co @ rx_back

    # device -> BS direct
    rb_dir = allocate_rbs(n_d, res.rb_direct, rng)
    with np.errstate(divide="ignore"):
        rx_dir = ch.p_device * sample_nakagami_power(np.full(n_d, ch.m_direct), rng) \
            * q ** (-ch.alpha_direct)
    dir_co = rb_dir[:, None] == rb_dir[None, :]
    np.fill_diagonal(dir_co, False)
    int_d = dir_co @ rx_dir

    return ChannelRealization(
        link_los=link_los, backhaul_los=back_los,
        rb_downlink=rb_down, rb_uplink=rb_up, rb_backhaul=rb_back, rb_direct=rb_dir,
        sinr_edge1=_sinr(sig1, int1, ch.noise),
        sinr_edge2=_sinr(sig2, int2, ch.noise),
        sinr_back=_sinr(rx_back, int_b, ch.noise),
        sinr_direct=_sinr(rx_dir, int_d, ch.noise),
    )


# ---------------------------------------------------------------------------
# interferer samplers shared by the spatial oracle and the Laplace oracles

def _distance_from(offset: float, points: np.ndarray, h: float) -> np.ndarray:
    return np.sqrt((points[:, 0] - offset) ** 2 + points[:, 1] ** 2 + h * h)


def _draw_states(r, net: NetworkParams, rng):
    los = rng.random(r.shape) < los_probability(r, net.height, net.channel.a, net.channel.b)
    ch = net.channel
    return (np.where(los, ch.alpha_los, ch.alpha_nlos),
            np.where(los, ch.m_los, ch.m_nlos))


def sample_uav_interferers(n: int, receiver_offset: float, net: NetworkParams, rng,
                           serving_distance: Optional[float] = None,
                           serving_alpha: Optional[float] = None,
                           max_candidates: int = 50_000_000):
    """``n`` interfering UAVs seen from a ground point at planar offset
    ``receiver_offset``. With a serving link given, candidates whose average
    power beats the serving UAV are rejected (association conditioning).

    Returns (distance, alpha, m) arrays; fewer than ``n`` rows come back only
    when no admissible interferer exists.
    """
    if n <= 0:
        empty = np.empty(0)
        return empty, empty, empty.astype(int)
    rs, als, ms = [], [], []
    got = 0
    drawn = 0
    batch = max(1024, 2 * n)
    while got < n and drawn < max_candidates:
        pts = sample_disk(batch, net.radius, rng)
        r = _distance_from(receiver_offset, pts, net.height)
        a, m = _draw_states(r, net, rng)
        if serving_distance is not None:
            keep = a * np.log(r) >= serving_alpha * math.log(serving_distance)
            r, a, m = r[keep], a[keep], m[keep]
        drawn += batch
        rs.append(r), als.append(a), ms.append(m)
        got += r.size
        if got == 0 and drawn >= 1_000_000:
            break
        rate = max(got / drawn, 1e-6)
        batch = int(min(max(1024, 1.2 * (n - got) / rate), 5_000_000))
    r = np.concatenate(rs)[:n]
    return r, np.concatenate(als)[:n], np.concatenate(ms)[:n]


def sample_ground_interferers(n: int, net: NetworkParams, rng):
    """Planar distances of ``n`` devices uniform on the disk to the BS."""
    pts = sample_disk(n, net.radius, rng)
    return np.hypot(pts[:, 0], pts[:, 1])


def _power_sum(counts: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """Split a flat pool of interferer powers into per-trial sums."""
    if powers.size < counts.sum():
        # not enough admissible interferers: the missing ones contribute nothing
        powers = np.concatenate([powers, np.zeros(counts.sum() - powers.size)])
    idx = np.repeat(np.arange(counts.size), counts)
    return np.bincount(idx, weights=powers[: counts.sum()], minlength=counts.size)


def interference_samples(link: str, n_interferers: int, n_draws: int, net: NetworkParams,
                         seed=None, *, serving_distance: float = None, receiver_offset: float = 0.0,
                         serving_state: str = LOS) -> np.ndarray:
    """Brute-force draws of the aggregate interference power for a link with
    an integer number of co-channel interferers.

    ``link`` is one of ``edge1``, ``edge2``, ``back`` or ``direct``.
    """
    if n_interferers < 0 or int(n_interferers) != n_interferers:
        raise InvalidArgumentError("the brute-force oracle needs an integer interferer count")
    n_interferers = int(n_interferers)
    rng = np.random.default_rng(seed)
    ch = net.channel
    total = n_interferers * n_draws
    if total == 0:
        return np.zeros(n_draws)
    if link == "edge1":
        if serving_distance is None:
            raise InvalidArgumentError("edge1 needs the serving distance")
        r, a, m = sample_uav_interferers(total, receiver_offset, net, rng,
                                         serving_distance, ch.alpha(serving_state))
        p = ch.p_uav
    elif link == "edge2":
        r, a, m = sample_uav_interferers(total, receiver_offset, net, rng)
        p = ch.p_device
    elif link == "back":
        r, a, m = sample_uav_interferers(total, 0.0, net, rng)
        p = ch.p_uav
    elif link == "direct":
        r = sample_ground_interferers(total, net, rng)
        a = np.full(total, ch.alpha_direct)
        m = np.full(total, ch.m_direct)
        p = ch.p_device
    else:
        raise InvalidArgumentError(f"unknown link {link!r}")
    with np.errstate(divide="ignore"):
        powers = p * sample_nakagami_power(m, rng) * r ** (-a)
    return _power_sum(np.full(n_draws, n_interferers), powers)


def laplace_oracle(link: str, s: float, n_interferers: int, net: NetworkParams,
                   n_draws: int = 100_000, seed=None, **geometry) -> float:
    """Sample mean of exp(-s I) over brute-force interference draws."""
    i = interference_samples(link, n_interferers, n_draws, net, seed, **geometry)
    return float(np.mean(np.exp(-s * i)))


# ---------------------------------------------------------------------------
# empirical success


@dataclass
class EmpiricalEstimate:
    theta: np.ndarray
    estimate: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_trials: int

    @property
    def ci_halfwidth(self) -> np.ndarray:
        return (self.ci_high - self.ci_low) / 2


def _spatial_sinr_chunk(link: str, target: int, topology: Topology, assignment: ClusterAssignment,
                        net: NetworkParams, n: int, rng) -> np.ndarray:
    """SINR samples (rows = trials, cols = hops) for the tagged node."""
    ch, res = net.channel, net.resources
    h = net.height
    if link == "edge":
        l = float(assignment.serving_distance_l[target])
        x0 = float(np.hypot(*topology.devices[target]))
        u = int(assignment.serving_uav[target])
        y0 = float(np.hypot(*topology.uavs[u]))
        los = rng.random(n) < los_probability(l, h, ch.a, ch.b)
        alpha = np.where(los, ch.alpha_los, ch.alpha_nlos)
        m = np.where(los, ch.m_los, ch.m_nlos)
        k_down = _sample_cochannel_count(topology.n_uavs, res.rb_bs, rng, n)
        k_up = _sample_cochannel_count(topology.n_devices, res.rb_uav, rng, n)
        i_down = np.zeros(n)
        for state, mask in ((LOS, los), (NLOS, ~los)):
            counts = k_down[mask]
            if counts.sum() == 0:
                continue
            r, a, mm = sample_uav_interferers(int(counts.sum()), x0, net, rng, l, ch.alpha(state))
            pw = ch.p_uav * sample_nakagami_power(mm, rng) * r ** (-a)
            i_down[mask] = _power_sum(counts, pw)
        r, a, mm = sample_uav_interferers(int(k_up.sum()), y0, net, rng)
        i_up = _power_sum(k_up, ch.p_device * sample_nakagami_power(mm, rng) * r ** (-a))
        gain = l ** (-alpha)
        s_down = ch.p_uav * sample_nakagami_power(m, rng) * gain
        s_up = ch.p_device * sample_nakagami_power(m, rng) * gain
        return np.column_stack([_sinr(s_down, i_down, ch.noise), _sinr(s_up, i_up, ch.noise)])
    if link == "back":
        g = float(assignment.backhaul_distance_g[target])
        los = rng.random(n) < los_probability(g, h, ch.a, ch.b)
        alpha = np.where(los, ch.alpha_los, ch.alpha_nlos)
        m = np.where(los, ch.m_los, ch.m_nlos)
        k = _sample_cochannel_count(topology.n_uavs, res.rb_bs, rng, n)
        r, a, mm = sample_uav_interferers(int(k.sum()), 0.0, net, rng)
        i = _power_sum(k, ch.p_uav * sample_nakagami_power(mm, rng) * r ** (-a))
        s = ch.p_uav * sample_nakagami_power(m, rng) * g ** (-alpha)
        return _sinr(s, i, ch.noise)[:, None]
    if link == "direct":
        q = float(np.hypot(*topology.devices[target]))
        k = _sample_cochannel_count(topology.n_devices, res.rb_direct, rng, n)
        r = sample_ground_interferers(int(k.sum()), net, rng)
        with np.errstate(divide="ignore"):
            pw = ch.p_device * sample_nakagami_power(np.full(r.size, ch.m_direct), rng) \
                * r ** (-ch.alpha_direct)
        i = _power_sum(k, pw)
        s = ch.p_device * sample_nakagami_power(np.full(n, ch.m_direct), rng) \
            * q ** (-ch.alpha_direct)
        return _sinr(s, i, ch.noise)[:, None]
    raise InvalidArgumentError(f"unknown link {link!r}")


def _network_sinr_chunk(link, target, topology, assignment, net, n, rng, los_policy):
    rows = []
    for _ in range(n):
        cr = realize_round(topology, assignment, net, rng, los_policy)
        if link == "edge":
            rows.append((cr.sinr_edge1[target], cr.sinr_edge2[target]))
        elif link == "back":
            rows.append((cr.sinr_back[target],))
        else:
            rows.append((cr.sinr_direct[target],))
    return np.asarray(rows, dtype=float)


def empirical_success(topology: Topology, assignment: ClusterAssignment, link: str,
                      target: int, net: NetworkParams, n_trials: int, seed=None,
                      thetas: Optional[Sequence[float]] = None, mode: str = "spatial",
                      los_policy: str = "resample", confidence_z: float = 1.959963984540054
                      ) -> EmpiricalEstimate:
    """Success frequency of ``link`` for node ``target`` over ``n_trials``
    independent realizations, at every threshold in ``thetas`` (linear)."""
    if n_trials < 1:
        raise InvalidArgumentError("n_trials must be >= 1")
    if link not in LINKS:
        raise InvalidArgumentError(f"link must be one of {LINKS}")
    if mode not in ("spatial", "network"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    thetas = np.atleast_1d(np.asarray(
        [net.channel.theta] if thetas is None else thetas, dtype=float))
    n_chunks = -(-n_trials // CHUNK)
    seqs = np.random.SeedSequence(seed).spawn(n_chunks)
    hits = np.zeros(thetas.size)
    for c, ss in enumerate(seqs):
        n = min(CHUNK, n_trials - c * CHUNK)
        rng = np.random.default_rng(ss)
        if mode == "spatial":
            sinr = _spatial_sinr_chunk(link, target, topology, assignment, net, n, rng)
        else:
            sinr = _network_sinr_chunk(link, target, topology, assignment, net, n, rng, los_policy)
        worst = sinr.min(axis=1)
        hits += (worst[:, None] > thetas[None, :]).sum(axis=0)
    p = hits / n_trials
    half = confidence_z * np.sqrt(p * (1 - p) / n_trials)
    return EmpiricalEstimate(thetas, p, np.clip(p - half, 0, 1), np.clip(p + half, 0, 1), n_trials)
