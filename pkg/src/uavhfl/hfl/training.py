"""Two-level training loop with unreliable links, plus direct-to-BS baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..analytics import SuccessProbabilities
from ..errors import InvalidArgumentError
from ..geometry import ClusterAssignment, NetworkParams, Topology
from ..montecarlo import realize_round
from ..perf import UAVLatency, latency_compute, latency_link, latency_round
from .aggregation import bs_aggregate, uav_aggregate
from .data import DataPartition, Dataset
from .mlp import MLPShape, batched_loss_and_grad, logits

VARIANTS = ("unbiased-hfl", "conventional-hfl", "fedavg", "unbiased-fedavg")
CHANNELS = ("montecarlo", "bernoulli", "perfect")


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.01
    local_period: int = 2
    global_period: int = 2
    total_iterations: int = 1000
    batch_size: int = 64
    variant: str = "unbiased-hfl"
    seed: int = 0
    channel: str = "montecarlo"
    los_policy: str = "resample"
    hidden: int = 64
    eval_every: int = 1
    # probabilities below this are raised to it inside 1/P factors
    probability_floor: float = 1e-3
    model_bits: Optional[int] = None
    # extra model sizes (bits) whose cumulative latency is tracked alongside
    latency_bits_grid: tuple = ()
    cpu_cycles_per_sample: float = 20.0
    cpu_frequency: float = 2e9

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InvalidArgumentError("learning_rate must be >= 0")
        if self.local_period < 1:
            raise InvalidArgumentError("local_period must be >= 1")
        if self.global_period % self.local_period != 0 or self.global_period < 1:
            raise InvalidArgumentError("global_period must be a positive multiple of local_period")
        if self.total_iterations < self.global_period:
            raise InvalidArgumentError("total_iterations must be at least global_period")
        if self.batch_size < 1 or self.hidden < 1 or self.eval_every < 1:
            raise InvalidArgumentError("batch_size, hidden and eval_every must be >= 1")
        if self.variant not in VARIANTS:
            raise InvalidArgumentError(f"variant must be one of {VARIANTS}")
        if self.channel not in CHANNELS:
            raise InvalidArgumentError(f"channel must be one of {CHANNELS}")
        if not 0 < self.probability_floor <= 1:
            raise InvalidArgumentError("probability_floor must lie in (0, 1]")
        if any(z <= 0 for z in self.latency_bits_grid):
            raise InvalidArgumentError("latency_bits_grid entries must be positive")

    @property
    def is_hierarchical(self) -> bool:
        return self.variant.endswith("hfl")

    @property
    def is_unbiased(self) -> bool:
        return self.variant.startswith("unbiased")


@dataclass
class TrainingTrace:
    iteration: np.ndarray
    accuracy: np.ndarray
    loss: np.ndarray
    edge_successes: np.ndarray
    back_successes: np.ndarray
    latency: np.ndarray
    final_params: np.ndarray = field(repr=False, default=None)
    # one column per entry of the config's latency_bits_grid
    latency_grid: np.ndarray = field(repr=False, default=None)

    def first_reaching(self, target: float) -> Optional[int]:
        hit = np.flatnonzero(self.accuracy >= target)
        return int(hit[0]) if hit.size else None

    def iterations_to(self, target: float) -> float:
        i = self.first_reaching(target)
        return math.inf if i is None else float(self.iteration[i])

    def latency_to(self, target: float) -> float:
        i = self.first_reaching(target)
        return math.inf if i is None else float(self.latency[i])

    def latency_grid_to(self, target: float) -> np.ndarray:
        i = self.first_reaching(target)
        n = 0 if self.latency_grid is None else self.latency_grid.shape[1]
        return np.full(n, math.inf) if i is None else self.latency_grid[i].copy()

    def rows(self):
        for i in range(len(self.iteration)):
            yield (int(self.iteration[i]), float(self.accuracy[i]), float(self.loss[i]),
                   int(self.edge_successes[i]), int(self.back_successes[i]),
                   float(self.latency[i]))


def sample_batches(sizes: np.ndarray, batch: int, rng: np.random.Generator) -> np.ndarray:
    """Per-device positions of a mini-batch drawn without replacement.

    Devices holding fewer than ``batch`` samples use all of them, padded by
    repetition so the result stays rectangular.
    """
    width = int(sizes.max())
    keys = rng.random((len(sizes), width))
    keys[np.arange(width)[None, :] >= sizes[:, None]] = np.inf
    order = np.argsort(keys, axis=1)[:, :batch]
    if batch > sizes.min():
        order = order % sizes[:, None]
    return order


def local_sgd_step(shape: MLPShape, params: np.ndarray, X: np.ndarray, y: np.ndarray,
                   learning_rate: float, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """One mini-batch SGD step for one device (full batch when batch_size >= n)."""
    if batch_size < 1:
        raise InvalidArgumentError("batch_size must be >= 1")
    n = len(y)
    pos = np.arange(n) if batch_size >= n else \
        sample_batches(np.array([n]), batch_size, rng)[0]
    _, g = batched_loss_and_grad(shape, params[None], X[pos][None], y[pos][None])
    return params - learning_rate * g[0]


def evaluate(shape: MLPShape, params: np.ndarray, dataset: Dataset):
    """(accuracy, mean cross-entropy) of one model on a dataset."""
    z = logits(shape, params, dataset.X)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(len(dataset.y)), dataset.y].mean())
    return float(np.mean(np.argmax(z, axis=1) == dataset.y)), loss


class _Channel:
    """Success indicators and per-link latencies for one aggregation event."""

    def __init__(self, config: TrainingConfig, topology, assignment, probs, net, rng):
        self.config = config
        self.topology = topology
        self.assignment = assignment
        self.probs = probs
        self.net = net
        self.rng = rng
        self.theta = net.channel.theta

    def draw(self):
        n_d, n_u = self.topology.n_devices, self.topology.n_uavs
        if self.config.channel == "perfect":
            inf_d, inf_u = np.full(n_d, np.inf), np.full(n_u, np.inf)
            return dict(edge=np.ones(n_d, bool), back=np.ones(n_u, bool),
                        direct=np.ones(n_d, bool), sinr_down=inf_d, sinr_up=inf_d,
                        sinr_back=inf_u, sinr_direct=inf_d)
        if self.config.channel == "bernoulli":
            edge = self.rng.random(n_d) < self.probs.edge
            back = self.rng.random(n_u) < self.probs.backhaul
            direct = self.rng.random(n_d) < self.probs.direct
            # no SINR samples: successful links are charged the threshold rate
            at = lambda ok: np.where(ok, self.theta, 0.0)
            return dict(edge=edge, back=back, direct=direct, sinr_down=at(edge),
                        sinr_up=at(edge), sinr_back=at(back), sinr_direct=at(direct))
        cr = realize_round(self.topology, self.assignment, self.net, self.rng,
                           self.config.los_policy)
        return dict(edge=cr.edge_indicator(self.theta), back=cr.back_indicator(self.theta),
                    direct=cr.direct_indicator(self.theta), sinr_down=cr.sinr_edge1,
                    sinr_up=cr.sinr_edge2, sinr_back=cr.sinr_back, sinr_direct=cr.sinr_direct)


def _link_latency(bits, bandwidth, sinr, ok, theta):
    """Delivered links take Z / rate; failed ones hold the round until the
    threshold-rate deadline, the longest a delivered link can take."""
    deadline = latency_link(bits, bandwidth, theta)
    out = np.full(np.shape(sinr), deadline, dtype=float)
    for i in np.flatnonzero(ok):
        out[i] = min(latency_link(bits, bandwidth, sinr[i]), deadline)
    return out


def train(topology: Topology, assignment: ClusterAssignment,
          probabilities: Optional[SuccessProbabilities], partition: DataPartition,
          dataset: Dataset, config: TrainingConfig, net: Optional[NetworkParams] = None,
          init_params: Optional[np.ndarray] = None) -> TrainingTrace:
    net = net or NetworkParams(n_devices=topology.n_devices, n_uavs=topology.n_uavs)
    n_d, n_u = topology.n_devices, topology.n_uavs
    if partition.n_devices != n_d:
        raise InvalidArgumentError("partition and topology disagree on the device count")
    if probabilities is None:
        if config.is_unbiased or config.channel == "bernoulli":
            raise InvalidArgumentError("this configuration needs success probabilities")
        probabilities = SuccessProbabilities.perfect(n_d, n_u)

    shape = MLPShape(dataset.X.shape[1], config.hidden, dataset.n_classes)
    ss_init, ss_sgd, ss_chan = np.random.SeedSequence(config.seed).spawn(3)
    rng_sgd = np.random.default_rng(ss_sgd)
    channel = _Channel(config, topology, assignment, probabilities, net,
                       np.random.default_rng(ss_chan))

    floor = config.probability_floor
    if config.is_unbiased:
        inv_edge = np.maximum(probabilities.edge, floor)
        inv_back = np.maximum(probabilities.backhaul, floor)
        inv_direct = np.maximum(probabilities.direct, floor)
    else:
        inv_edge, inv_back, inv_direct = np.ones(n_d), np.ones(n_u), np.ones(n_d)

    serving = np.asarray(assignment.serving_uav)
    p_k = partition.weights
    p_u = partition.cluster_weights(serving, n_u)
    p_in = partition.within_cluster_weights(serving, n_u)
    members = [np.flatnonzero(serving == u) for u in range(n_u)]

    sizes = partition.counts
    padded = np.zeros((n_d, int(sizes.max())), dtype=np.int64)
    for k, ix in enumerate(partition.indices):
        padded[k, :len(ix)] = ix

    w_bar = shape.init(np.random.default_rng(ss_init)) if init_params is None \
        else np.array(init_params, dtype=float)
    if w_bar.shape != (shape.size,):
        raise InvalidArgumentError("init_params has the wrong size")
    w = np.tile(w_bar, (n_d, 1))
    v = np.tile(w_bar, (n_u, 1))

    E, G, T = config.local_period, config.global_period, config.total_iterations
    bits = np.array([config.model_bits or 32 * shape.size, *config.latency_bits_grid],
                    dtype=float)
    res = net.resources
    theta = net.channel.theta
    t_cmp = np.array([latency_compute(config.cpu_cycles_per_sample, n, config.cpu_frequency)
                      for n in sizes])

    it, acc, loss, edge_ok, back_ok, lat = [], [], [], [], [], []
    clock = np.zeros(bits.size)
    pending_edge = 0
    pending_back = 0
    last_draw = None
    cached = None
    for t in range(T):
        pos = sample_batches(sizes, config.batch_size, rng_sgd)
        rows = padded[np.arange(n_d)[:, None], pos]
        _, grads = batched_loss_and_grad(shape, w, dataset.X[rows], dataset.y[rows])
        w = w - config.learning_rate * grads
        step = t + 1

        if config.is_hierarchical:
            if step % E == 0:
                last_draw = channel.draw()
                ok = last_draw["edge"]
                pending_edge += int(ok.sum())
                for u in range(n_u):
                    mk = members[u]
                    if mk.size == 0:
                        continue
                    v[u] = uav_aggregate(v[u], w[mk], p_in[mk], ok[mk], inv_edge[mk])
                    if step % G != 0:
                        w[mk] = v[u]
            if step % G == 0:
                ok_b = last_draw["back"]
                pending_back += int(ok_b.sum())
                active = p_u > 0
                w_bar = bs_aggregate(w_bar, v[active], p_u[active], ok_b[active],
                                     inv_back[active])
                v[:] = w_bar
                w[:] = w_bar
                clock += _hfl_round_latency(last_draw, members, bits, res, theta, E, G, t_cmp)
        elif step % G == 0:
            draw = channel.draw()
            ok = draw["direct"]
            pending_edge += int(ok.sum())
            w_bar = bs_aggregate(w_bar, w, p_k, ok, inv_direct)
            w[:] = w_bar
            t_up = _link_latency(1.0, res.bandwidth_device, draw["sinr_direct"], ok, theta)
            clock += bits * float(t_up.max()) + G * float(t_cmp.max())

        if step % config.eval_every == 0 or step == T:
            # the global model only moves at global aggregations
            if cached is None or step % G == 0:
                cached = evaluate(shape, w_bar, dataset)
            a, l = cached
            it.append(step), acc.append(a), loss.append(l)
            edge_ok.append(pending_edge), back_ok.append(pending_back), lat.append(clock.copy())
            pending_edge = pending_back = 0

    lat = np.array(lat).reshape(len(it), bits.size)
    return TrainingTrace(np.array(it), np.array(acc), np.array(loss), np.array(edge_ok),
                         np.array(back_ok), lat[:, 0], final_params=w_bar,
                         latency_grid=lat[:, 1:])


def _hfl_round_latency(draw, members, bits, res, theta, E, G, t_cmp) -> np.ndarray:
    """Round time for every model size in ``bits`` (link times scale with Z)."""
    down = _link_latency(1.0, res.bandwidth_uav, draw["sinr_down"], draw["edge"], theta)
    up = _link_latency(1.0, res.bandwidth_device, draw["sinr_up"], draw["edge"], theta)
    back = _link_latency(1.0, res.bandwidth_uav, draw["sinr_back"], draw["back"], theta)
    out = np.empty(bits.size)
    for j, z in enumerate(bits):
        clusters = [UAVLatency(z * down[mk], z * up[mk], z * back[u], t_cmp[mk])
                    for u, mk in enumerate(members) if mk.size]
        out[j] = latency_round(clusters, E, G)
    return out


def with_variant(config: TrainingConfig, variant: str) -> TrainingConfig:
    return replace(config, variant=variant)
