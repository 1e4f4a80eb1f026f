"""Convergence-bound calculators and the round latency model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError

C_BOUND = 112 / 5


def _check_probs(name, arr):
    arr = np.asarray(arr, dtype=float)
    if np.any(arr <= 0) or np.any(arr > 1):
        raise InvalidArgumentError(f"{name} must lie in (0, 1]")
    return arr


def compute_b_terms(p_edge, p_back, p_k, p_u, clusters: Sequence[Sequence[int]]):
    """Channel penalty terms (B1, B2, B3).

    ``clusters[u]`` lists the device indices served by UAV ``u``.
    """
    p_edge = _check_probs("p_edge", p_edge)
    p_back = _check_probs("p_back", p_back)
    p_k = np.asarray(p_k, dtype=float)
    p_u = np.asarray(p_u, dtype=float)
    if len(clusters) != len(p_back) or len(p_u) != len(p_back):
        raise InvalidArgumentError("one cluster, weight and backhaul probability per UAV")
    b1 = float(np.sum(p_u * (1 / p_back - 1)))
    b2 = b3 = 0.0
    for u, members in enumerate(clusters):
        mk = np.asarray(members, dtype=int)
        if mk.size == 0:
            continue
        b2 += float(np.sum(p_k[mk] * (1 / (p_back[u] * p_edge[mk]) - 1)))
        b3 += float(np.sum(p_k[mk] * (1 / p_edge[mk] - 1)))
    return b1, b2, b3


@dataclass(frozen=True)
class BoundInputs:
    """Assumption constants and run settings for the convergence bounds.

    Divergence and gradient constants default to 1. ``b_terms`` may be given
    directly or computed from probabilities with ``compute_b_terms``.
    """

    lipschitz: float = 1.0
    upward_divergence: float = 1.0      # between UAV and global gradients
    downward_divergence: float = 1.0    # between device and UAV gradients
    global_divergence: float = 1.0      # uniform-grouping variant
    grad_bound_uav: float = 1.0
    grad_bound_device: float = 1.0
    learning_rate: float = 0.01
    local_period: int = 2
    global_period: int = 2
    horizon: int = 1000
    initial_gap: float = 1.0
    b_terms: tuple = (0.0, 0.0, 0.0)
    cluster_weights: tuple = (1.0,)
    total_samples: float = 10_000
    n_uavs: int = 10

    def __post_init__(self):
        for name in ("upward_divergence", "downward_divergence", "global_divergence",
                     "grad_bound_uav", "grad_bound_device", "initial_gap"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        if self.lipschitz <= 0 or self.learning_rate <= 0 or self.horizon < 1:
            raise InvalidArgumentError("lipschitz, learning_rate and horizon must be positive")
        if self.local_period < 1 or self.global_period < self.local_period:
            raise InvalidArgumentError("need 1 <= local_period <= global_period")
        if len(self.b_terms) != 3 or any(b < 0 for b in self.b_terms):
            raise InvalidArgumentError("b_terms must be three nonnegative numbers")
        if self.learning_rate >= max_learning_rate(self.global_period, self.lipschitz):
            raise InvalidArgumentError(
                f"learning rate {self.learning_rate} violates eta < 1/(4 sqrt(3) G L)"
                f" = {max_learning_rate(self.global_period, self.lipschitz):.6g}")


def max_learning_rate(global_period: float, lipschitz: float) -> float:
    return 1.0 / (4 * math.sqrt(3) * global_period * lipschitz)


def bound_terms(inp: BoundInputs, appendix_constants: bool = False) -> dict:
    """Named terms of the general bound; their sum is ``convergence_bound``.

    ``appendix_constants`` swaps the two channel constant terms
    ``4 B1^2 A1^2 + 4 B1^2 A2^2`` for ``4 B1 A1^2 + 4 B2 A2^2``.
    """
    b1, b2, b3 = inp.b_terms
    eta, T = inp.learning_rate, inp.horizon
    L, E, G = inp.lipschitz, inp.local_period, inp.global_period
    a1, a2 = inp.grad_bound_uav, inp.grad_bound_device
    c = C_BOUND
    if appendix_constants:
        const_uav, const_dev = 4 * b1 * a1, 4 * b2 * a2
    else:
        const_uav, const_dev = 4 * b1 ** 2 * a1, 4 * b1 ** 2 * a2
    return {
        "gap": 2 * inp.initial_gap / (eta * T),
        "channel_uav": const_uav,
        "channel_device": const_dev,
        "channel_drift": 2 * c * eta ** 2 * G ** 2 * a2 * L ** 2 * (b3 + b2),
        "upward": 5 * c * eta ** 2 * G ** 2 * inp.upward_divergence * L ** 2,
        "local_channel": c * eta ** 2 * E ** 2 * a2 * L ** 2 * b3,
        "downward": c * eta ** 2 * L ** 2 * float(np.sum(inp.cluster_weights))
        * E ** 2 * inp.downward_divergence,
    }


def convergence_bound(inp: BoundInputs, appendix_constants: bool = False) -> float:
    """Bound on the average squared gradient norm after ``horizon`` steps.

    ``grad_bound_*`` and the divergences are the squared constants (A^2, eps^2).
    """
    return float(sum(bound_terms(inp, appendix_constants).values()))


def uniform_terms(inp: BoundInputs) -> dict:
    b1, b2, b3 = inp.b_terms
    eta, T = inp.learning_rate, inp.horizon
    L, E, G = inp.lipschitz, inp.local_period, inp.global_period
    a1, a2 = inp.grad_bound_uav, inp.grad_bound_device
    n, nu = inp.total_samples, inp.n_uavs
    if n <= 1:
        raise InvalidArgumentError("total_samples must exceed 1")
    mix = (nu - 1) / (n - 1)
    c = C_BOUND
    return {
        "gap": 2 * inp.initial_gap / (eta * T),
        "channel_uav": 4 * b1 ** 2 * a1,
        "channel_device": 4 * b1 ** 2 * a2,
        "divergence": 5 * c * eta ** 2 * L ** 2 * (mix * G ** 2 + (1 - mix) * E ** 2)
        * inp.global_divergence,
        "channel_drift": 2 * c * eta ** 2 * L ** 2 * a2 * ((b3 + b2) * G ** 2 + b3 * E ** 2),
    }


def convergence_bound_uniform(inp: BoundInputs) -> float:
    """Bound under uniform random grouping of samples into clusters."""
    return float(sum(uniform_terms(inp).values()))


def improvement_threshold(b2: float, global_divergence: float, grad_bound_device: float,
                          n_uavs: int, total_samples: float) -> float:
    """Right-hand side of the B3 condition."""
    nu, n = n_uavs, total_samples
    if n <= nu:
        raise InvalidArgumentError("total_samples must exceed n_uavs")
    denom = 2 * nu - n
    if denom == 0:
        raise InvalidArgumentError("condition undefined when total_samples == 2 n_uavs")
    if grad_bound_device <= 0:
        raise InvalidArgumentError("grad_bound_device must be positive")
    lead = -2.5 * (nu * global_divergence / grad_bound_device) * (
        1 + (nu - 1) / (n - 1) - (nu - 1) / nu)
    return (lead + b2 * (n - nu)) / denom


def improvement_condition(b2: float, b3: float, global_divergence: float,
                          grad_bound_device: float, n_uavs: int, total_samples: float,
                          m: float = 1.0) -> bool:
    """True when B3 <= threshold, evaluated literally as written.

    ``m`` enters only the admissible period ratios (see ``period_ratio_limits``)
    and is accepted here so callers keep one parameter set.
    """
    if m <= 0:
        raise InvalidArgumentError("m must be positive")
    return bool(b3 <= improvement_threshold(b2, global_divergence, grad_bound_device,
                                            n_uavs, total_samples))


def period_ratio_limits(n_uavs: int, total_samples: float, m: float):
    """(l_max, q_max(l)) for scaling G by l and E by q.

    ``m`` is left to the caller; its meaning is not pinned down.
    """
    nu, n = n_uavs, total_samples
    if n <= nu or m <= 0:
        raise InvalidArgumentError("need total_samples > n_uavs and m > 0")
    l_max = math.sqrt((n - nu) / (nu * m * m) + 1)

    def q_max(l):
        inner = 1 - m * m * (l * l - 1) * nu / (n - nu)
        return math.sqrt(inner) if inner > 0 else 0.0

    return l_max, q_max


def bound_delta_surface(b2_grid, b3_grid, base: BoundInputs, l: float, q: float):
    """Uniform bound at (l G, q E) minus the bound at (G, E) over a (B2, B3)
    grid; negative entries mean the longer periods tighten the bound.

    Periods are scaled as reals here; the step-size guard is re-checked.
    """
    b1 = base.b_terms[0]
    out = np.empty((len(b2_grid), len(b3_grid)))
    for i, b2 in enumerate(b2_grid):
        for j, b3 in enumerate(b3_grid):
            ref = replace(base, b_terms=(b1, b2, b3))
            scaled = _scaled(ref, l, q)
            out[i, j] = convergence_bound_uniform(scaled) - convergence_bound_uniform(ref)
    return out


def _scaled(inp: BoundInputs, l: float, q: float) -> BoundInputs:
    # bypass the integer-period intent without skipping validation
    return replace(inp, global_period=inp.global_period * l, local_period=inp.local_period * q)


# ---------------------------------------------------------------------------
# latency


def latency_compute(cycles_per_sample: float, samples: float, frequency: float) -> float:
    if cycles_per_sample < 0 or samples < 0 or frequency <= 0:
        raise InvalidArgumentError("cycles and samples must be >= 0, frequency > 0")
    return cycles_per_sample * samples / frequency


def latency_link(bits: float, bandwidth: float, sinr: float) -> float:
    """Transfer time at the Shannon rate; infinite when the SINR is zero."""
    if bits < 0 or bandwidth <= 0 or sinr < 0:
        raise InvalidArgumentError("bits >= 0, bandwidth > 0 and sinr >= 0 required")
    if sinr == 0:
        return math.inf
    if math.isinf(sinr) or bits == 0:
        return 0.0
    return bits / (bandwidth * math.log2(1 + sinr))


@dataclass
class UAVLatency:
    """Link and compute times of one cluster for one global round."""

    downlink: Sequence[float]   # UAV -> each member
    uplink: Sequence[float]     # each member -> UAV
    backhaul: float             # UAV -> BS
    compute: Sequence[float]    # one local iteration per member


def uav_round_latency(c: UAVLatency, local_period: int, global_period: int) -> float:
    ratio = global_period / local_period
    return (ratio * max(c.downlink, default=0.0) + ratio * max(c.uplink, default=0.0)
            + c.backhaul + global_period * max(c.compute, default=0.0))


def latency_round(per_uav: Iterable[UAVLatency], local_period: int, global_period: int) -> float:
    """Synchronous round time: the slowest UAV's total."""
    if local_period < 1 or global_period < local_period:
        raise InvalidArgumentError("need 1 <= local_period <= global_period")
    return max((uav_round_latency(c, local_period, global_period) for c in per_uav), default=0.0)
