"""End-to-end acceptance checks, one test per criterion.

Each test records a verdict line that the terminal summary prints as
``criterion N: PASS|FAIL  detail``.
"""
import csv
import dataclasses
import json
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE
from uavhfl.analytics import laplace_back, laplace_direct, laplace_edge1, laplace_edge2
from uavhfl.cli import EXIT_OK, _training_config, _training_setup, main
from uavhfl.config import ExperimentConfig
from uavhfl.geometry import LOS, NLOS, NetworkParams
from uavhfl.hfl import MLPShape, bs_aggregate, loss_and_grad, train, uav_aggregate
from uavhfl.montecarlo import laplace_oracle
from uavhfl.perf import (BoundInputs, convergence_bound, latency_compute, latency_link,
                         max_learning_rate)
from uavhfl.errors import InvalidArgumentError

SEEDS = (0, 1, 2)
ORDER = ("unbiased-hfl", "conventional-hfl", "unbiased-fedavg", "fedavg")


def verdict(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, detail


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def cli(tmp_path, cmd, config=None, *extra):
    args = [cmd, "--out", str(tmp_path)]
    if config is not None:
        tmp_path.mkdir(parents=True, exist_ok=True)
        cfg = tmp_path / f"{cmd}.json"
        cfg.write_text(json.dumps(config))
        args += ["--config", str(cfg)]
    assert main([*args, *extra]) == EXIT_OK
    return tmp_path


@pytest.fixture(scope="module")
def training_runs():
    """Default-config traces for every variant on every seed."""
    runs = {}
    for seed in SEEDS:
        cfg = dataclasses.replace(ExperimentConfig(), seed=seed)
        net, topo, asg, probs, data, part = _training_setup(cfg, seed)
        for v in ORDER:
            runs[seed, v] = train(topo, asg, probs, part, data,
                                  _training_config(cfg, v, seed), net)
    return runs


def test_criterion_01_analytic_matches_monte_carlo(tmp_path):
    out = cli(tmp_path, "validate", None, "--trials", "50000")
    rows = read_csv(out / "validate.csv")
    gaps = {}
    for r in rows:
        gaps[r["link"]] = max(gaps.get(r["link"], 0.0),
                              abs(float(r["analytic"]) - float(r["empirical"])))
    pairs = {r["pair"] for r in rows}
    ok = len(pairs) == 5 and len(rows) == 5 * 3 * 7 and max(gaps.values()) <= 0.02
    verdict(1, ok, "max gap " + ", ".join(f"{k} {v:.4f}" for k, v in sorted(gaps.items())))


def test_criterion_02_laplace_oracles():
    net = NetworkParams()
    ch = net.channel

    def s_of(m, l, alpha, p):
        return m * 10 ** (-0.5) * l ** alpha / p

    cases = []
    for i, (state, l, x0) in enumerate([(LOS, 180.0, 200.0), (NLOS, 150.0, 50.0),
                                        (LOS, 300.0, 420.0)]):
        s = s_of(ch.m(state), l, ch.alpha(state), ch.p_uav)
        cases.append(("edge1", laplace_edge1(s, l, x0, state, 2, net),
                      dict(s=s, n=2, serving_distance=l, receiver_offset=x0,
                           serving_state=state)))
    for y0, l in [(0.0, 150.0), (250.0, 180.0), (450.0, 300.0)]:
        s = s_of(ch.m_los, l, ch.alpha_los, ch.p_device)
        cases.append(("edge2", laplace_edge2(s, LOS, 3, net, y0=y0),
                      dict(s=s, n=3, receiver_offset=y0)))
    for g, n in [(130.0, 1), (250.0, 2), (400.0, 3)]:
        s = s_of(ch.m_los, g, ch.alpha_los, ch.p_uav)
        cases.append(("back", laplace_back(s, n, net), dict(s=s, n=n)))
    for q, n in [(60.0, 1), (150.0, 2), (350.0, 3)]:
        s = s_of(ch.m_direct, q, ch.alpha_direct, ch.p_device)
        cases.append(("direct", laplace_direct(s, n, net), dict(s=s, n=n)))
    worst = 0.0
    for j, (kind, got, kw) in enumerate(cases):
        s, n = kw.pop("s"), kw.pop("n")
        ref = laplace_oracle(kind, s, n, net, 100_000, seed=[2, j], **kw)
        worst = max(worst, abs(got - ref))
    verdict(2, worst <= 0.01, f"{len(cases)} cases, max |analytic - oracle| {worst:.4f}")


def test_criterion_03_height_peak(tmp_path):
    rows = read_csv(cli(tmp_path, "sweep-height") / "sweep_height.csv")
    h = np.array([float(r["height"]) for r in rows])
    p = np.array([float(r["edge"]) for r in rows])
    peaks = [i for i in range(1, len(p) - 1) if p[i] >= p[i - 1] and p[i] >= p[i + 1]]
    d = np.sign(np.diff(p))
    changes = int(np.count_nonzero(np.diff(d[d != 0]) != 0))
    best = int(np.argmax(p))
    ok = (h.min() == 10 and h.max() == 1000 and len(peaks) == 1 and changes == 1
          and 0 < best < len(p) - 1 and 120 <= h[best] <= 300)
    verdict(3, ok, f"single maximum {p[best]:.4f} at h = {h[best]:g} m")


def test_criterion_04_uav_count_trend(tmp_path):
    rows = read_csv(cli(tmp_path, "sweep-uavs") / "sweep_uavs.csv")
    n_u = [int(r["n_uavs"]) for r in rows]
    edge = np.array([float(r["edge_mean"]) for r in rows])
    back = np.array([float(r["backhaul_population_mean"]) for r in rows])
    ok = (n_u[0] == 5 and n_u[-1] == 20 and np.all(np.diff(edge) > 0)
          and np.all(np.diff(back) < 0))
    verdict(4, ok, "edge " + " ".join(f"{v:.3f}" for v in edge)
            + " | backhaul " + " ".join(f"{v:.3f}" for v in back))


def test_criterion_05_unbiased_aggregation():
    rng = np.random.default_rng(5)
    worst = 0.0
    for agg, k in ((uav_aggregate, 5), (bs_aggregate, 4)):
        prev = rng.uniform(-1, 1, 6)
        models = rng.uniform(1, 2, (k, 6))
        w = rng.dirichlet(np.ones(k))
        p = rng.uniform(0.5, 0.95, k)
        draws = rng.random((10_000, k)) < p
        mean = np.mean([agg(prev, models, w, d, p) for d in draws], axis=0)
        full = w @ models
        worst = max(worst, float(np.max(np.abs(mean - full) / np.abs(full))))
    verdict(5, worst <= 0.01, f"max relative deviation {worst:.4%} over both levels")


def test_criterion_06_training_order(training_runs):
    good, lines = 0, []
    for seed in SEEDS:
        its = [training_runs[seed, v].iterations_to(0.85) for v in ORDER]
        holds = all(a < b for a, b in zip(its, its[1:]))
        good += holds
        lines.append(f"seed {seed} " + "/".join(f"{i:g}" for i in its)
                     + ("" if holds else " (order broken)"))
    verdict(6, good >= 2, f"{good}/3 seeds; " + "; ".join(lines))


def test_criterion_07_period_degradation():
    res = []
    for seed in SEEDS:
        cfg = dataclasses.replace(ExperimentConfig(), seed=seed, total_iterations=320)
        net, topo, asg, probs, data, part = _training_setup(cfg, seed)
        acc = []
        for e, g in ((2, 2), (8, 16)):
            c = dataclasses.replace(cfg, local_period=e, global_period=g)
            tr = train(topo, asg, probs, part, data,
                       _training_config(c, "unbiased-hfl", seed), net)
            acc.append(float(tr.accuracy[-1]))
        res.append(acc)
    ok = all(a > b for a, b in res)
    verdict(7, ok, "T=320 final accuracy (2,2) vs (8,16): "
            + "; ".join(f"{a:.4f} vs {b:.4f}" for a, b in res))


def test_criterion_08_bound_calculator():
    zero = BoundInputs(b_terms=(0.0, 0.0, 0.0), upward_divergence=0.0,
                       downward_divergence=0.0, global_divergence=0.0, initial_gap=0.0)
    ok = convergence_bound(zero) == 0.0
    grid = np.linspace(0.0, 2.0, 5)
    base = dict(b_terms=(0.5, 1.0, 0.5), upward_divergence=1.0, downward_divergence=1.0)
    for axis in range(5):
        vals = []
        for v in grid:
            kw = {**base, "b_terms": list(base["b_terms"])}
            if axis < 3:
                kw["b_terms"][axis] = v
            else:
                kw[("upward_divergence", "downward_divergence")[axis - 3]] = v
            kw["b_terms"] = tuple(kw["b_terms"])
            vals.append(convergence_bound(BoundInputs(**kw)))
        ok &= bool(np.all(np.diff(vals) >= 0))
    limit = max_learning_rate(2, 1.0)
    try:
        BoundInputs(learning_rate=limit, global_period=2, lipschitz=1.0)
        ok = False
    except InvalidArgumentError:
        pass
    BoundInputs(learning_rate=0.99 * limit, global_period=2, lipschitz=1.0)
    verdict(8, ok, f"zero bound, 5 monotone axes, guard at eta = {limit:.5f}")


def test_criterion_09_gradient_check():
    shape = MLPShape(5, 4, 3)
    rng = np.random.default_rng(9)
    params = shape.init(rng)
    X, y = rng.standard_normal((12, 5)), rng.integers(0, 3, 12)
    _, grad = loss_and_grad(shape, params, X, y)
    eps, worst = 1e-5, 0.0
    for i in rng.choice(shape.size, 20, replace=False):
        e = np.zeros(shape.size)
        e[i] = eps
        fd = (loss_and_grad(shape, params + e, X, y)[0]
              - loss_and_grad(shape, params - e, X, y)[0]) / (2 * eps)
        worst = max(worst, abs(fd - grad[i]) / max(abs(grad[i]), 1e-8))
    verdict(9, worst <= 1e-4, f"20 probes, max relative error {worst:.2e}")


def test_criterion_10_latency(training_runs):
    hand = latency_compute(20, 1000, 2e9) == 1e-5 and latency_link(1e6, 1e6, 1.0) == 1.0
    good, lines = 0, []
    for seed in SEEDS:
        a = training_runs[seed, "unbiased-hfl"].latency_to(0.85)
        b = training_runs[seed, "conventional-hfl"].latency_to(0.85)
        good += a < b
        lines.append(f"seed {seed} {a:.1f}s vs {b:.1f}s")
    verdict(10, hand and good >= 2,
            f"hand examples {'exact' if hand else 'wrong'}; {good}/3 seeds; " + "; ".join(lines))


SMALL = {
    "n_devices": 6, "n_uavs": 2, "samples_per_device": 20, "total_iterations": 12,
    "hidden": 8, "batch_size": 8, "trials": 500, "n_pairs": 2, "theta_grid_db": [-10, 0],
    "height_grid": [60, 120, 240], "uav_grid": [2, 3], "n_layouts": 2,
    "model_bits_grid": [1e5, 2e5], "b2_grid": [0, 1], "b3_grid": [0, 1],
}
PRODUCTS = {"probe": ["probe"], "validate": ["validate"], "sweep-height": ["sweep_height"],
            "sweep-uavs": ["sweep_uavs"], "train": ["train", "train_summary"],
            "latency": ["latency"], "bound": ["bound", "bound_surface"]}


def test_criterion_11_determinism(tmp_path):
    same = []
    for cmd, names in PRODUCTS.items():
        a = cli(tmp_path / "a" / cmd, cmd, SMALL)
        b = cli(tmp_path / "b" / cmd, cmd, SMALL)
        same.append(all((a / f"{n}.csv").read_bytes() == (b / f"{n}.csv").read_bytes()
                        for n in names))
    verdict(11, all(same), f"{sum(same)}/{len(PRODUCTS)} subcommands byte-identical")
