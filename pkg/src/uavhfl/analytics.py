"""Success probabilities of the edge, backhaul and direct links.

Each interference field is a mixture of LoS/NLoS interferer laws. The
Laplace transform of one interferer is integrated numerically and raised to
the (real) mean interferer count.

Conditional success given the serving state is evaluated in one of two ways:

``"exact"`` (default)
    Integer-shape Gamma tail ``P(g > x) = sum_{i<m} e^{-mx} (mx)^i / i!``.
    This turns into ``sum_{i<m} (-s)^i h_i`` where ``h_i`` are the Taylor
    coefficients of ``exp(-s N) L(s)`` at the rate ``s``. Every term is
    nonnegative, so the sum is numerically benign.
``"alzer"``
    The alternating binomial form ``sum_j C(m,j)(-1)^{j+1} e^{-s_j N} L(s_j)``
    with ``s_j = j eta theta l^alpha / P`` and ``eta = m (m!)^{-1/m}``. It
    overestimates the Gamma tail for ``m > 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .errors import InvalidArgumentError, NumericalError
from .geometry import (
    LOS,
    NLOS,
    ClusterAssignment,
    NetworkParams,
    Topology,
    exclusion_region,
)
from .quadrature import DEFAULT_SPEC, QuadratureSpec, integrate

MASS_FLOOR = 1e-12
CDF_MODES = ("exact", "alzer")


def eta(m: int) -> float:
    # log-space factorial keeps large m finite
    return m * math.exp(-math.lgamma(m + 1) / m)


def _other(state: str) -> str:
    return NLOS if state == LOS else LOS


class _Kernel:
    """Scalar fast paths of the geometry densities for use inside quadrature."""

    def __init__(self, net: NetworkParams):
        self.R = net.radius
        self.h = net.height
        self.a = net.channel.a
        self.b = net.channel.b
        self.d2 = self.R ** 2 + self.h ** 2

    def p_los(self, r):
        g2 = r * r - self.h * self.h
        elev = math.degrees(math.atan2(self.h, math.sqrt(g2 if g2 > 0 else 0.0)))
        return 1.0 / (1.0 + self.a * math.exp(-self.b * (elev - self.a)))

    def p_state(self, r, state):
        p = self.p_los(r)
        return p if state == LOS else 1.0 - p

    def f_offcenter(self, r, x0):
        R, h = self.R, self.h
        if r < h:
            return 0.0
        if x0 <= 0.0:
            return 2 * r / R ** 2 if r * r <= self.d2 else 0.0
        r2 = r * r
        if r2 <= (R - x0) ** 2 + h * h:
            return 2 * r / R ** 2
        if r2 > (R + x0) ** 2 + h * h:
            return 0.0
        arg = (r2 + x0 * x0 - self.d2) / (2 * x0 * math.sqrt(r2 - h * h))
        return 2 * r / (math.pi * R ** 2) * math.acos(min(1.0, max(-1.0, arg)))

    def f_center(self, r):
        return 2 * r / self.R ** 2 if self.h <= r and r * r <= self.d2 else 0.0

    def limits(self, x0):
        return (math.sqrt((self.R - x0) ** 2 + self.h ** 2),
                math.sqrt((self.R + x0) ** 2 + self.h ** 2))


@dataclass
class _Branch:
    """One interferer class: distance weight on [lo, hi] and its fading law."""

    weight: Callable[[float], float]
    lo: float
    hi: float
    kink: Optional[float]
    alpha: float
    m: int
    power: float


def _piecewise(f, lo, hi, kink, spec):
    if lo >= hi:
        return 0.0
    if kink is not None and lo < kink < hi:
        return integrate(f, lo, kink, spec) + integrate(f, kink, hi, spec)
    return integrate(f, lo, hi, spec)


def _kappa_coeff(k: int, s: float, r: float, br: _Branch) -> float:
    """k-th Taylor coefficient in s of (1 + s P r^-a / m)^-m, in a form that
    stays finite as r -> 0."""
    ra = br.m * r ** br.alpha
    denom = ra + s * br.power
    if denom == 0.0:
        return 1.0 if k == 0 else 0.0
    base = (ra / denom) ** br.m
    if k == 0:
        return base
    return (-1) ** k * math.comb(br.m + k - 1, k) * base * (br.power / denom) ** k


class _Field:
    """Aggregate interference of ``n`` i.i.d. interferers drawn from a
    mixture of branches."""

    def __init__(self, branches: List[_Branch], n: float, spec: QuadratureSpec):
        self.n = n
        self.spec = spec
        self.branches = []
        self.mass = 0.0
        for br in branches:
            mass = _piecewise(br.weight, br.lo, br.hi, br.kink, spec)
            # a branch with no mass is absent, not divided by
            if mass >= MASS_FLOOR:
                self.branches.append(br)
                self.mass += mass

    @property
    def silent(self) -> bool:
        return self.n <= 0 or not self.branches

    def per_interferer(self, s: float, order: int) -> np.ndarray:
        """Taylor coefficients 0..order-1 of one interferer's transform at s."""
        out = np.zeros(order)
        for br in self.branches:
            for k in range(order):
                out[k] += _piecewise(
                    lambda r, k=k, br=br: _kappa_coeff(k, s, r, br) * br.weight(r),
                    br.lo, br.hi, br.kink, self.spec)
        out /= self.mass
        out[0] = min(1.0, max(0.0, out[0]))
        return out

    def laplace(self, s: float) -> float:
        if s == 0 or self.silent:
            return 1.0
        return float(self.per_interferer(s, 1)[0] ** self.n)

    def taylor(self, s: float, order: int) -> np.ndarray:
        """Taylor coefficients of the aggregate transform L(s + t) in t."""
        if self.silent:
            out = np.zeros(order)
            out[0] = 1.0
            return out
        g = self.per_interferer(s, order)
        return _power_series_pow(g, self.n)


def _power_series_pow(g: np.ndarray, n: float) -> np.ndarray:
    """Coefficients of (sum g_k t^k)^n for real n (J.C.P. Miller recurrence)."""
    order = len(g)
    f = np.zeros(order)
    if g[0] <= 0.0:
        return f
    f[0] = g[0] ** n
    for k in range(1, order):
        acc = 0.0
        for j in range(1, k + 1):
            acc += ((n + 1) * j - k) * g[j] * f[k - j]
        f[k] = acc / (k * g[0])
    return f


# ---------------------------------------------------------------------------
# interference fields of each hop


def _edge1_field(l_k, x0, serving_state, n, net, spec):
    k = _Kernel(net)
    ch = net.channel
    w_m, w_p = k.limits(x0)
    other = _other(serving_state)
    branches = []
    for state, lower in (
        (serving_state, l_k),
        (other, exclusion_region(l_k, ch.alpha(serving_state), ch.alpha(other))),
    ):
        branches.append(_Branch(
            weight=lambda r, st=state: k.f_offcenter(r, x0) * k.p_state(r, st),
            lo=max(lower, net.height), hi=w_p, kink=w_m,
            alpha=ch.alpha(state), m=ch.m(state), power=ch.p_uav))
    return _Field(branches, n, spec)


def _edge2_field(y0, n, net, spec):
    k = _Kernel(net)
    ch = net.channel
    w_m, w_p = k.limits(y0)
    branches = [
        _Branch(weight=lambda r, st=state: k.f_offcenter(r, y0) * k.p_state(r, st),
                lo=net.height, hi=w_p, kink=w_m,
                alpha=ch.alpha(state), m=ch.m(state), power=ch.p_device)
        for state in (LOS, NLOS)
    ]
    return _Field(branches, n, spec)


def _back_field(n, net, spec):
    k = _Kernel(net)
    ch = net.channel
    d = math.sqrt(k.d2)
    branches = [
        _Branch(weight=lambda r, st=state: k.f_center(r) * k.p_state(r, st),
                lo=net.height, hi=d, kink=None,
                alpha=ch.alpha(state), m=ch.m(state), power=ch.p_uav)
        for state in (LOS, NLOS)
    ]
    return _Field(branches, n, spec)


def _direct_field(n, net, spec):
    ch = net.channel
    R = net.radius
    branch = _Branch(weight=lambda q: 2 * q / R ** 2, lo=0.0, hi=R, kink=None,
                     alpha=ch.alpha_direct, m=ch.m_direct, power=ch.p_device)
    return _Field([branch], n, spec)


def _check_serving(distance, net, what):
    if distance < net.height * (1 - 1e-12):
        raise InvalidArgumentError(f"{what} distance must be at least the UAV height")


def laplace_edge1(s: float, l_k: float, x0: float, serving_state: str,
                  n_interferers: Optional[float], net: NetworkParams,
                  spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Transform of co-channel UAV interference at a device at planar offset
    ``x0`` served from 3-D distance ``l_k`` in ``serving_state``.

    ``n_interferers=None`` uses ``N_u / M_b - 1``.
    """
    _check_serving(l_k, net, "serving")
    n = net.interferers_edge1 if n_interferers is None else n_interferers
    if s == 0 or n <= 0:
        return 1.0
    return _edge1_field(l_k, x0, serving_state, n, net, spec).laplace(s)


def laplace_edge2(s: float, serving_state: str, n_interferers: Optional[float],
                  net: NetworkParams, y0: float = 0.0,
                  spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Transform of co-channel device interference at a UAV at planar offset
    ``y0``. Transmitters are not selected by power, so ``serving_state`` does
    not change the value; it is accepted for symmetry with ``laplace_edge1``.
    """
    if serving_state not in (LOS, NLOS):
        raise InvalidArgumentError(f"unknown state {serving_state!r}")
    n = net.interferers_edge2 if n_interferers is None else n_interferers
    if s == 0 or n <= 0:
        return 1.0
    return _edge2_field(y0, n, net, spec).laplace(s)


def laplace_back(s: float, n_interferers: Optional[float], net: NetworkParams,
                 spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    n = net.interferers_back if n_interferers is None else n_interferers
    if s == 0 or n <= 0:
        return 1.0
    return _back_field(n, net, spec).laplace(s)


def laplace_direct(s: float, n_interferers: Optional[float], net: NetworkParams,
                   spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    n = net.interferers_direct if n_interferers is None else n_interferers
    if s == 0 or n <= 0:
        return 1.0
    return _direct_field(n, net, spec).laplace(s)


# ---------------------------------------------------------------------------
# conditional success


def conditional_success(power: float, distance: float, alpha: float, m: int,
                        noise: float, theta: float, field: "_Field",
                        cdf: str = "exact") -> float:
    """P(SINR > theta) for one serving state at a fixed serving distance."""
    if cdf not in CDF_MODES:
        raise InvalidArgumentError(f"cdf must be one of {CDF_MODES}")
    if cdf == "alzer":
        base = eta(m) * theta * distance ** alpha / power
        total = 0.0
        for j in range(1, m + 1):
            sj = j * base
            noise_term = math.exp(-sj * noise)
            if noise_term == 0.0:
                continue
            total += math.comb(m, j) * (-1) ** (j + 1) * noise_term * field.laplace(sj)
        return total
    s = m * theta * distance ** alpha / power
    if math.exp(-s * noise) == 0.0:
        return 0.0
    lap = field.taylor(s, m)
    # noise factor exp(-(s+t)N) has coefficients e^{-sN} (-N)^k / k!
    noise_c = np.array([math.exp(-s * noise) * (-noise) ** k / math.factorial(k)
                        for k in range(m)])
    h = np.convolve(lap, noise_c)[:m]
    return float(sum((-s) ** i * h[i] for i in range(m)))


def _check_probability(p: float, what: str) -> float:
    if not math.isfinite(p) or not (-1e-6 <= p <= 1 + 1e-6):
        raise NumericalError(f"{what} evaluated to {p}, outside [0, 1]")
    return min(1.0, max(0.0, p))


def edge_success(l_k: float, x0: float, net: NetworkParams, y0: float = 0.0,
                 spec: QuadratureSpec = DEFAULT_SPEC, theta: Optional[float] = None,
                 cdf: str = "exact") -> float:
    """Joint downlink and uplink success of a device at planar offset ``x0``,
    served from 3-D distance ``l_k`` by a UAV at planar offset ``y0``."""
    _check_serving(l_k, net, "serving")
    ch = net.channel
    theta = ch.theta if theta is None else theta
    p_los = _Kernel(net).p_los(l_k)
    up_field = _edge2_field(y0, net.interferers_edge2, net, spec)
    total = 0.0
    for state, weight in ((LOS, p_los), (NLOS, 1.0 - p_los)):
        if weight <= 0:
            continue
        alpha, m = ch.alpha(state), ch.m(state)
        down_field = _edge1_field(l_k, x0, state, net.interferers_edge1, net, spec)
        down = conditional_success(ch.p_uav, l_k, alpha, m, ch.noise, theta, down_field, cdf)
        if down == 0.0:
            continue
        up = conditional_success(ch.p_device, l_k, alpha, m, ch.noise, theta, up_field, cdf)
        total += weight * down * up
    return _check_probability(total, "edge success")


def backhaul_success(g_u: float, net: NetworkParams, spec: QuadratureSpec = DEFAULT_SPEC,
                     theta: Optional[float] = None, cdf: str = "exact") -> float:
    _check_serving(g_u, net, "backhaul")
    ch = net.channel
    theta = ch.theta if theta is None else theta
    p_los = _Kernel(net).p_los(g_u)
    field = _back_field(net.interferers_back, net, spec)
    total = 0.0
    for state, weight in ((LOS, p_los), (NLOS, 1.0 - p_los)):
        total += weight * conditional_success(
            ch.p_uav, g_u, ch.alpha(state), ch.m(state), ch.noise, theta, field, cdf)
    return _check_probability(total, "backhaul success")


def mean_backhaul_success(net: NetworkParams, spec: QuadratureSpec = DEFAULT_SPEC,
                          theta: Optional[float] = None, cdf: str = "exact") -> float:
    """Backhaul success averaged over a UAV placed uniformly on the disk.

    The 3-D UAV-BS distance then has density 2g/R^2 on [h, sqrt(R^2 + h^2)].
    """
    h, R = net.height, net.radius
    d = math.hypot(R, h)
    val = integrate(lambda g: backhaul_success(g, net, spec, theta, cdf) * 2 * g / R ** 2,
                    h, d, spec)
    return _check_probability(val, "mean backhaul success")


def direct_success(q_k: float, net: NetworkParams, spec: QuadratureSpec = DEFAULT_SPEC,
                   theta: Optional[float] = None, cdf: str = "exact") -> float:
    if q_k <= 0:
        raise InvalidArgumentError("device-BS distance must be positive")
    ch = net.channel
    theta = ch.theta if theta is None else theta
    field = _direct_field(net.interferers_direct, net, spec)
    total = conditional_success(ch.p_device, q_k, ch.alpha_direct, ch.m_direct,
                                ch.noise, theta, field, cdf)
    return _check_probability(total, "direct success")


# ---------------------------------------------------------------------------
# per-node tables


@dataclass
class SuccessProbabilities:
    edge: np.ndarray
    backhaul: np.ndarray
    direct: np.ndarray

    def __post_init__(self):
        for name in ("edge", "backhaul", "direct"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1 or arr.size == 0:
                raise InvalidArgumentError(f"{name} must be a nonempty 1-D array")
            if not np.all((arr > 0) & (arr <= 1)):
                raise InvalidArgumentError(
                    f"{name} probabilities must lie in (0, 1]; smallest is {arr.min():.3g}")
            setattr(self, name, arr)

    @classmethod
    def perfect(cls, n_devices: int, n_uavs: int) -> "SuccessProbabilities":
        return cls(np.ones(n_devices), np.ones(n_uavs), np.ones(n_devices))


def success_table(topology: Topology, assignment: ClusterAssignment, net: NetworkParams,
                  spec: QuadratureSpec = DEFAULT_SPEC, theta: Optional[float] = None,
                  cdf: str = "exact"):
    """Raw per-node probabilities (zeros allowed): (edge, backhaul, direct)."""
    x0 = topology.device_bs_distances()
    y0 = np.hypot(topology.uavs[:, 0], topology.uavs[:, 1])
    edge = np.array([
        edge_success(float(assignment.serving_distance_l[k]), float(x0[k]), net,
                     y0=float(y0[assignment.serving_uav[k]]), spec=spec, theta=theta, cdf=cdf)
        for k in range(topology.n_devices)
    ])
    back = np.array([backhaul_success(float(g), net, spec, theta, cdf)
                     for g in assignment.backhaul_distance_g])
    direct = np.array([direct_success(max(float(q), 1e-9), net, spec, theta, cdf) for q in x0])
    return edge, back, direct


def success_probabilities(topology: Topology, assignment: ClusterAssignment,
                          net: NetworkParams, spec: QuadratureSpec = DEFAULT_SPEC,
                          theta: Optional[float] = None, cdf: str = "exact",
                          floor: float = 0.0) -> SuccessProbabilities:
    """Table as a validated ``SuccessProbabilities``. A positive ``floor``
    clips tiny values up so that inverse-probability weights stay finite."""
    edge, back, direct = success_table(topology, assignment, net, spec, theta, cdf)
    if floor > 0:
        edge, back, direct = (np.maximum(a, floor) for a in (edge, back, direct))
    return SuccessProbabilities(edge, back, direct)
