"""Network topology, LoS model, association and interferer distance laws.

Devices and UAVs are independent binomial point processes on a disk of
radius ``R`` centred on the base station. UAVs hover at a common height
``h``; devices and the BS sit on the ground.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError, ZeroMassError

LOS = "L"
NLOS = "N"
STATES = (LOS, NLOS)


@dataclass(frozen=True)
class ChannelParams:
    """Propagation constants with the reference network defaults."""

    alpha_los: float = 2.0
    alpha_nlos: float = 3.5
    m_los: int = 4
    m_nlos: int = 1
    a: float = 9.61
    b: float = 0.16
    p_device: float = 0.75
    p_uav: float = 1.5
    noise: float = 4.14e-6
    theta: float = 10 ** (-5 / 10)
    m_direct: int = 2
    alpha_direct: float = 2.5

    def __post_init__(self):
        if self.alpha_los <= 0 or self.alpha_nlos <= 0 or self.alpha_direct <= 0:
            raise InvalidArgumentError("path-loss exponents must be positive")
        if self.alpha_los > self.alpha_nlos:
            raise InvalidArgumentError("alpha_los must not exceed alpha_nlos")
        for name in ("m_los", "m_nlos", "m_direct"):
            m = getattr(self, name)
            if int(m) != m or m < 1:
                raise InvalidArgumentError(f"{name} must be an integer >= 1, got {m}")
        if self.theta <= 0:
            raise InvalidArgumentError("theta must be a positive linear ratio")
        if self.p_device <= 0 or self.p_uav <= 0 or self.noise < 0:
            raise InvalidArgumentError("powers must be positive and noise non-negative")

    def alpha(self, state: str) -> float:
        return self.alpha_los if state == LOS else self.alpha_nlos

    def m(self, state: str) -> int:
        return int(self.m_los if state == LOS else self.m_nlos)


@dataclass(frozen=True)
class ResourceConfig:
    rb_bs: int = 5
    rb_uav: int = 15
    rb_direct: int = 20
    bandwidth_device: float = 1e6
    bandwidth_uav: float = 1e6

    def __post_init__(self):
        if min(self.rb_bs, self.rb_uav, self.rb_direct) < 1:
            raise InvalidArgumentError("resource block counts must be >= 1")
        if self.bandwidth_device <= 0 or self.bandwidth_uav <= 0:
            raise InvalidArgumentError("bandwidths must be positive")


@dataclass(frozen=True)
class NetworkParams:
    """Everything the analytic formulas need besides node coordinates."""

    channel: ChannelParams = field(default_factory=ChannelParams)
    resources: ResourceConfig = field(default_factory=ResourceConfig)
    radius: float = 500.0
    height: float = 120.0
    n_devices: int = 50
    n_uavs: int = 10

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise InvalidArgumentError("radius and height must be positive")
        if self.n_devices < 1 or self.n_uavs < 1:
            raise InvalidArgumentError("node counts must be >= 1")

    @property
    def interferers_edge1(self) -> float:
        # N_u * (1/M_b) - 1
        return self.n_uavs / self.resources.rb_bs - 1.0

    @property
    def interferers_edge2(self) -> float:
        return self.n_devices / self.resources.rb_uav - 1.0

    @property
    def interferers_back(self) -> float:
        return self.n_uavs / self.resources.rb_bs - 1.0

    @property
    def interferers_direct(self) -> float:
        return self.n_devices / self.resources.rb_direct - 1.0


@dataclass
class Topology:
    radius: float
    height: float
    devices: np.ndarray
    uavs: np.ndarray

    def __post_init__(self):
        self.devices = np.asarray(self.devices, dtype=float).reshape(-1, 2)
        self.uavs = np.asarray(self.uavs, dtype=float).reshape(-1, 2)
        if self.radius <= 0 or self.height <= 0:
            raise InvalidArgumentError("radius and height must be positive")
        if len(self.devices) < 1 or len(self.uavs) < 1:
            raise InvalidArgumentError("need at least one device and one UAV")
        tol = 1e-9 * self.radius
        if (np.hypot(*self.devices.T) > self.radius + tol).any() or (
            np.hypot(*self.uavs.T) > self.radius + tol
        ).any():
            raise InvalidArgumentError("all points must lie inside the disk")

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    @property
    def n_uavs(self) -> int:
        return len(self.uavs)

    def device_uav_distances(self) -> np.ndarray:
        """3-D distances, shape (n_devices, n_uavs)."""
        diff = self.devices[:, None, :] - self.uavs[None, :, :]
        return np.sqrt((diff ** 2).sum(-1) + self.height ** 2)

    def uav_bs_distances(self) -> np.ndarray:
        return np.sqrt((self.uavs ** 2).sum(-1) + self.height ** 2)

    def device_bs_distances(self) -> np.ndarray:
        return np.hypot(self.devices[:, 0], self.devices[:, 1])


@dataclass
class ClusterAssignment:
    serving_uav: np.ndarray
    serving_distance_l: np.ndarray
    serving_los_state: np.ndarray
    backhaul_distance_g: np.ndarray
    backhaul_los_state: np.ndarray
    # LoS flags of every device-UAV link drawn at association time
    link_los: np.ndarray

    def members(self, u: int) -> np.ndarray:
        return np.flatnonzero(self.serving_uav == u)

    def clusters(self) -> list:
        return [self.members(u) for u in range(len(self.backhaul_distance_g))]


def sample_disk(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform points on a disk (polar method with square-root radius)."""
    # row-wise draws keep the first k points identical for any n >= k
    u = rng.random((n, 2))
    rho = radius * np.sqrt(u[:, 0])
    phi = 2 * np.pi * u[:, 1]
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi)])


def sample_topology(n_devices: int, n_uavs: int, radius: float, height: float,
                    seed=None) -> Topology:
    if n_devices < 1 or n_uavs < 1:
        raise InvalidArgumentError("n_devices and n_uavs must be >= 1")
    if radius <= 0 or height <= 0:
        raise InvalidArgumentError("radius and height must be positive")
    # separate streams so the device layout does not depend on n_uavs
    dev_ss, uav_ss = np.random.SeedSequence(seed).spawn(2)
    devices = sample_disk(n_devices, radius, np.random.default_rng(dev_ss))
    uavs = sample_disk(n_uavs, radius, np.random.default_rng(uav_ss))
    return Topology(radius, height, devices, uavs)


def los_probability(r, h: float, a: float, b: float):
    """Probability that an air-to-ground link of 3-D length ``r`` is LoS."""
    r = np.asarray(r, dtype=float)
    if h <= 0:
        raise InvalidArgumentError("height must be positive")
    if np.any(r < h * (1 - 1e-12)):
        raise InvalidArgumentError("3-D distance must be at least the UAV height")
    ground = np.sqrt(np.maximum(r * r - h * h, 0.0))
    # arctan2 gives the 90 degree limit at r == h
    elevation = np.degrees(np.arctan2(h, ground))
    out = 1.0 / (1.0 + a * np.exp(-b * (elevation - a)))
    return float(out) if out.ndim == 0 else out


def nlos_probability(r, h: float, a: float, b: float):
    return 1.0 - los_probability(r, h, a, b)


def state_probability(r, state: str, h: float, a: float, b: float):
    p = los_probability(r, h, a, b)
    return p if state == LOS else 1.0 - p


def exclusion_region(l: float, alpha_from: float, alpha_to: float) -> float:
    """Closest distance an opposite-state interferer may have under
    max-average-power association: ``l ** (alpha_from / alpha_to)``."""
    if l <= 0 or alpha_from <= 0 or alpha_to <= 0:
        raise InvalidArgumentError("distance and exponents must be positive")
    return l ** (alpha_from / alpha_to)


def support_limits(x0: float, R: float, h: float):
    """(w_m, w_p): kink and upper end of the off-centre distance law."""
    w_m = np.sqrt((R - x0) ** 2 + h * h)
    w_p = np.sqrt((R + x0) ** 2 + h * h)
    return float(w_m), float(w_p)


def interferer_pdf_offcenter(r, x0: float, R: float, h: float):
    """Density of the 3-D distance from a ground point at planar offset
    ``x0`` to a node uniform on the disk, lifted to height ``h``."""
    if x0 > R * (1 + 1e-12) or x0 < 0:
        raise InvalidArgumentError("receiver offset must lie in [0, R]")
    r = np.asarray(r, dtype=float)
    w_m, w_p = support_limits(x0, R, h)
    out = np.zeros_like(r)
    inner = (r >= h) & (r <= w_m)
    out[inner] = 2 * r[inner] / R ** 2
    if x0 > 0:
        outer = (r > w_m) & (r <= w_p)
        ro = r[outer]
        d2 = R * R + h * h
        arg = (ro * ro + x0 * x0 - d2) / (2 * x0 * np.sqrt(ro * ro - h * h))
        out[outer] = 2 * ro / (np.pi * R ** 2) * np.arccos(np.clip(arg, -1.0, 1.0))
    return float(out) if out.ndim == 0 else out


def interferer_pdf_center(r, R: float, h: float):
    r = np.asarray(r, dtype=float)
    d = np.sqrt(R * R + h * h)
    out = np.where((r >= h) & (r <= d), 2 * r / R ** 2, 0.0)
    return float(out) if out.ndim == 0 else out


def state_branch_mass(state: str, lower: float, x0: float, R: float, h: float,
                      a: float, b: float, spec=None) -> float:
    """Unnormalised mass of interferers in ``state`` beyond ``lower``."""
    from .quadrature import QuadratureSpec, integrate

    spec = spec or QuadratureSpec()
    w_m, w_p = support_limits(x0, R, h)
    lower = max(lower, h)
    if lower >= w_p:
        return 0.0

    def f(r):
        return interferer_pdf_offcenter(r, x0, R, h) * state_probability(r, state, h, a, b)

    return _split_integral(f, lower, w_p, w_m, spec)


def conditional_state_pdf(r, state: str, lower: float, receiver_offset: float,
                          R: float, h: float, a: float, b: float, spec=None):
    """Distance density of an interferer known to be in ``state`` and to lie
    beyond ``lower``. Raises ``ZeroMassError`` when that event is empty."""
    mass = state_branch_mass(state, lower, receiver_offset, R, h, a, b, spec)
    if mass < 1e-12:
        raise ZeroMassError(f"no {state}-state interferers beyond {lower:.6g} m")
    r = np.asarray(r, dtype=float)
    lower = max(lower, h)
    base = interferer_pdf_offcenter(r, receiver_offset, R, h)
    rr = np.maximum(r, h)
    out = np.where(r >= lower, base * state_probability(rr, state, h, a, b), 0.0) / mass
    return float(out) if np.ndim(out) == 0 else out


def _split_integral(f, lo, hi, kink, spec):
    from .quadrature import integrate

    if lo < kink < hi:
        return integrate(f, lo, kink, spec) + integrate(f, kink, hi, spec)
    return integrate(f, lo, hi, spec)


def associate(topology: Topology, channel: ChannelParams, seed=None,
              rng: Optional[np.random.Generator] = None) -> ClusterAssignment:
    """Max-average-received-power association on sampled LoS states."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    h = topology.height
    dist = topology.device_uav_distances()
    link_los = rng.random(dist.shape) < los_probability(dist, h, channel.a, channel.b)
    alpha = np.where(link_los, channel.alpha_los, channel.alpha_nlos)
    # P_u is common to all UAVs, so compare path gains in the log domain
    log_gain = -alpha * np.log(dist)
    serving = np.argmax(log_gain, axis=1)
    rows = np.arange(topology.n_devices)
    g = topology.uav_bs_distances()
    back_los = rng.random(g.shape) < los_probability(g, h, channel.a, channel.b)
    return ClusterAssignment(
        serving_uav=serving,
        serving_distance_l=dist[rows, serving],
        serving_los_state=link_los[rows, serving],
        backhaul_distance_g=g,
        backhaul_los_state=back_los,
        link_los=link_los,
    )
