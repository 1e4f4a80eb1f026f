"""Command-line entry point: ``uavhfl <subcommand> [options]``.

Every subcommand writes ``<out>/<name>.csv`` plus ``<out>/<name>.meta.json``.
CSV bodies depend only on the configuration and seed; run metadata such as
wall time lives in the sidecar.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np
import scipy
import sklearn
from threadpoolctl import threadpool_limits

from . import __version__
from .analytics import (SuccessProbabilities, backhaul_success, direct_success, edge_success,
                        mean_backhaul_success, success_table)
from .config import ExperimentConfig, db_to_linear
from .errors import (ConfigError, ConvergenceError, InvalidArgumentError, NumericalError,
                     ZeroMassError)
from .geometry import associate, sample_topology
from .hfl.data import load_idx_dataset, partition_noniid, synthetic_blobs
from .hfl.training import VARIANTS, TrainingConfig, train
from .montecarlo import empirical_success
from .perf import (BoundInputs, bound_delta_surface, bound_terms, compute_b_terms,
                   convergence_bound_uniform, improvement_condition, improvement_threshold,
                   period_ratio_limits)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
THREADS_ENV = "UAVHFL_THREADS"
# zero analytic probabilities are lifted to this before entering the
# validated table; training applies its own, larger floor inside 1/P
TABLE_FLOOR = 1e-12


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return format(x, ".10g")
    return str(x)


class Output:
    """CSV writer plus metadata sidecar for one subcommand."""

    def __init__(self, out_dir: Path, cfg: ExperimentConfig, command: str):
        self.dir = out_dir
        self.cfg = cfg
        self.command = command
        self.started = time.perf_counter()
        self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, header: Sequence[str], rows: Iterable[Sequence], extra=None):
        path = self.dir / f"{name}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        meta = {
            "command": self.command,
            "csv": path.name,
            "columns": list(header),
            "seed": self.cfg.seed,
            "config_sha256": self.cfg.digest(),
            "config": self.cfg.to_dict(),
            "versions": {
                "uavhfl": __version__, "python": platform.python_version(),
                "numpy": np.__version__, "scipy": scipy.__version__,
                "scikit-learn": sklearn.__version__,
            },
            "wall_seconds": round(time.perf_counter() - self.started, 3),
        }
        if extra:
            meta.update(extra)
        (self.dir / f"{name}.meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


# ---------------------------------------------------------------------------
# shared builders


def _layout(cfg: ExperimentConfig, seed, net=None):
    net = net or cfg.network()
    topo = sample_topology(net.n_devices, net.n_uavs, net.radius, net.height, seed)
    return net, topo, associate(topo, net.channel, seed)


def _dataset(cfg: ExperimentConfig, seed: int):
    if cfg.dataset == "idx":
        return load_idx_dataset(cfg.idx_images, cfg.idx_labels)
    n = cfg.n_devices * cfg.samples_per_device
    return synthetic_blobs(n, cfg.n_classes, cfg.input_dim, cfg.separation, 1.0, seed)


def _training_config(cfg: ExperimentConfig, variant: str, seed: int, bits_grid=()):
    return TrainingConfig(
        learning_rate=cfg.learning_rate, local_period=cfg.local_period,
        global_period=cfg.global_period, total_iterations=cfg.total_iterations,
        batch_size=cfg.batch_size, variant=variant, seed=seed, channel=cfg.channel,
        los_policy=cfg.los_policy, hidden=cfg.hidden, eval_every=cfg.eval_every,
        probability_floor=cfg.probability_floor, model_bits=cfg.model_bits or None,
        latency_bits_grid=tuple(float(z) for z in bits_grid),
        cpu_cycles_per_sample=cfg.cpu_cycles_per_sample, cpu_frequency=cfg.cpu_frequency)


def _variants(cfg: ExperimentConfig, only) -> List[str]:
    chosen = [only] if only else list(cfg.variants)
    for v in chosen:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant '{v}'; choose from {', '.join(VARIANTS)}")
    return chosen


def _training_setup(cfg: ExperimentConfig, seed: int):
    net, topo, asg = _layout(cfg, seed)
    edge, back, direct = success_table(topo, asg, net, cfg.quadrature(), cdf=cfg.cdf)
    probs = SuccessProbabilities(*(np.maximum(a, TABLE_FLOOR) for a in (edge, back, direct)))
    data = _dataset(cfg, seed)
    if data.X.shape[0] < cfg.n_devices * cfg.labels_per_device:
        raise ConfigError("dataset too small for the requested partition")
    part = partition_noniid(data.y, cfg.n_devices, cfg.labels_per_device,
                            np.random.default_rng(seed))
    return net, topo, asg, probs, data, part


# ---------------------------------------------------------------------------
# subcommands


def cmd_probe(cfg: ExperimentConfig, args, out: Output) -> str:
    net, topo, asg = _layout(cfg, cfg.seed)
    edge, back, direct = success_table(topo, asg, net, cfg.quadrature(), cdf=cfg.cdf)
    q = topo.device_bs_distances()
    rows = []
    for k in range(topo.n_devices):
        x, y = topo.devices[k]
        u = int(asg.serving_uav[k])
        rows.append(("device", k, x, y, u, "edge", asg.serving_distance_l[k], edge[k]))
        rows.append(("device", k, x, y, -1, "direct", q[k], direct[k]))
    for u in range(topo.n_uavs):
        x, y = topo.uavs[u]
        rows.append(("uav", u, x, y, -1, "back", asg.backhaul_distance_g[u], back[u]))
    out.write("probe", ["kind", "index", "x", "y", "serving_uav", "link", "distance",
                        "probability"], rows)
    return (f"mean edge {edge.mean():.4f}  mean backhaul {back.mean():.4f}  "
            f"mean direct {direct.mean():.4f}")


def cmd_validate(cfg: ExperimentConfig, args, out: Output) -> str:
    thetas_db = [float(t) for t in cfg.theta_grid_db]
    thetas = [db_to_linear(t) for t in thetas_db]
    spec = cfg.quadrature()
    rows, worst = [], 0.0
    for i in range(cfg.n_pairs):
        net, topo, asg = _layout(cfg, [cfg.seed, i])
        k = 0
        u = int(asg.serving_uav[k])
        l = float(asg.serving_distance_l[k])
        x0 = float(np.hypot(*topo.devices[k]))
        y0 = float(np.hypot(*topo.uavs[u]))
        g = float(asg.backhaul_distance_g[u])
        links = (
            ("edge", k, lambda th: edge_success(l, x0, net, y0, spec, th, cfg.cdf)),
            ("back", u, lambda th: backhaul_success(g, net, spec, th, cfg.cdf)),
            ("direct", k, lambda th: direct_success(x0, net, spec, th, cfg.cdf)),
        )
        for j, (link, target, fn) in enumerate(links):
            emp = empirical_success(topo, asg, link, target, net, cfg.trials,
                                    seed=[cfg.seed, i, j], thetas=thetas)
            for t_db, th, e, lo, hi in zip(thetas_db, thetas, emp.estimate, emp.ci_low,
                                           emp.ci_high):
                a = fn(th)
                worst = max(worst, abs(a - e))
                rows.append((t_db, i, link, a, e, lo, hi))
    out.write("validate", ["theta_db", "pair", "link", "analytic", "empirical", "ci_lo",
                           "ci_hi"], rows)
    return f"max |analytic - empirical| = {worst:.4f} over {len(rows)} points"


def _pair_geometry(cfg: ExperimentConfig):
    dev = np.asarray(cfg.pair_device_xy, dtype=float)
    uav = np.asarray(cfg.pair_uav_xy, dtype=float)
    return float(np.hypot(*(dev - uav))), float(np.hypot(*dev)), float(np.hypot(*uav))


def cmd_sweep_height(cfg: ExperimentConfig, args, out: Output) -> str:
    planar, x0, y0 = _pair_geometry(cfg)
    spec = cfg.quadrature()
    rows = []
    for h in cfg.height_grid:
        h = float(h)
        net = cfg.network(height=h)
        l = math.hypot(planar, h)
        g = math.hypot(y0, h)
        rows.append((h, edge_success(l, x0, net, y0, spec, cdf=cfg.cdf),
                     backhaul_success(g, net, spec, cdf=cfg.cdf)))
    out.write("sweep_height", ["height", "edge", "backhaul"], rows)
    best = max(rows, key=lambda r: r[1])
    return f"edge success peaks at h = {best[0]:g} m ({best[1]:.4f})"


def cmd_sweep_uavs(cfg: ExperimentConfig, args, out: Output) -> str:
    spec = cfg.quadrature()
    rows = []
    for n_u in cfg.uav_grid:
        net = cfg.network(n_uavs=int(n_u))
        edges, backs = [], []
        for j in range(cfg.n_layouts):
            _, topo, asg = _layout(cfg, [cfg.seed, j], net)
            e, b, _ = _edge_back_only(topo, asg, net, spec, cfg.cdf)
            edges.append(e.mean())
            backs.append(b.mean())
        rows.append((int(n_u), float(np.mean(edges)), float(np.mean(backs)),
                     mean_backhaul_success(net, spec, cdf=cfg.cdf)))
    out.write("sweep_uavs", ["n_uavs", "edge_mean", "backhaul_mean",
                             "backhaul_population_mean"], rows)
    return "; ".join(f"N_u={r[0]}: edge {r[1]:.3f} back {r[3]:.3f}" for r in rows)


def _edge_back_only(topo, asg, net, spec, cdf):
    x0 = topo.device_bs_distances()
    y0 = np.hypot(topo.uavs[:, 0], topo.uavs[:, 1])
    edge = np.array([edge_success(float(asg.serving_distance_l[k]), float(x0[k]), net,
                                  float(y0[asg.serving_uav[k]]), spec, cdf=cdf)
                     for k in range(topo.n_devices)])
    back = np.array([backhaul_success(float(g), net, spec, cdf=cdf)
                     for g in asg.backhaul_distance_g])
    return edge, back, None


def cmd_train(cfg: ExperimentConfig, args, out: Output) -> str:
    net, topo, asg, probs, data, part = _training_setup(cfg, cfg.seed)
    rows, summary = [], []
    for v in _variants(cfg, args.variant):
        tr = train(topo, asg, probs, part, data, _training_config(cfg, v, cfg.seed), net)
        for r in tr.rows():
            rows.append((v, *r))
        summary.append((v, tr.iterations_to(cfg.target_accuracy), tr.latency_to(
            cfg.target_accuracy), float(tr.accuracy[-1])))
    out.write("train", ["variant", "iteration", "accuracy", "loss", "edge_successes",
                        "back_successes", "latency_s"], rows)
    out.write("train_summary", ["variant", "iterations_to_target", "latency_to_target_s",
                                "final_accuracy"], summary)
    return "; ".join(f"{v}: {it:g} iterations" for v, it, _, _ in summary)


def cmd_latency(cfg: ExperimentConfig, args, out: Output) -> str:
    net, topo, asg, probs, data, part = _training_setup(cfg, cfg.seed)
    grid = [float(z) for z in cfg.model_bits_grid]
    variants = [v for v in _variants(cfg, args.variant) if args.variant or v.endswith("hfl")]
    rows = []
    for v in variants:
        tr = train(topo, asg, probs, part, data, _training_config(cfg, v, cfg.seed, grid), net)
        it = tr.iterations_to(cfg.target_accuracy)
        for z, lat in zip(grid, tr.latency_grid_to(cfg.target_accuracy)):
            rows.append((v, cfg.local_period, cfg.global_period, z, it, lat))
    out.write("latency", ["variant", "local_period", "global_period", "model_bits",
                          "iterations_to_target", "latency_to_target_s"], rows)
    return f"{len(rows)} rows"


def cmd_bound(cfg: ExperimentConfig, args, out: Output) -> str:
    net, topo, asg = _layout(cfg, cfg.seed)
    edge, back, direct = success_table(topo, asg, net, cfg.quadrature(), cdf=cfg.cdf)
    edge, back = np.maximum(edge, TABLE_FLOOR), np.maximum(back, TABLE_FLOOR)
    n_total = cfg.n_devices * cfg.samples_per_device
    p_k = np.full(cfg.n_devices, 1.0 / cfg.n_devices)
    p_u = np.bincount(asg.serving_uav, weights=p_k, minlength=cfg.n_uavs)
    b1, b2, b3 = compute_b_terms(edge, back, p_k, p_u, asg.clusters())
    base = BoundInputs(
        lipschitz=cfg.lipschitz, upward_divergence=cfg.upward_divergence,
        downward_divergence=cfg.downward_divergence, global_divergence=cfg.global_divergence,
        grad_bound_uav=cfg.grad_bound_uav, grad_bound_device=cfg.grad_bound_device,
        learning_rate=cfg.learning_rate, local_period=cfg.local_period,
        global_period=cfg.global_period, horizon=cfg.total_iterations,
        initial_gap=cfg.initial_gap, b_terms=(b1, b2, b3), cluster_weights=tuple(p_u),
        total_samples=n_total, n_uavs=cfg.n_uavs)
    rows = [("B1", b1), ("B2", b2), ("B3", b3)]
    for name, val in bound_terms(base, cfg.appendix_constants).items():
        rows.append((f"term_{name}", val))
    rows.append(("bound", sum(v for k, v in rows if k.startswith("term_"))))
    rows.append(("bound_uniform", convergence_bound_uniform(base)))
    l_max, q_max = period_ratio_limits(cfg.n_uavs, n_total, cfg.bound_m)
    l = cfg.bound_l if cfg.bound_l > 0 else (1 + l_max) / 2
    q = q_max(l)
    rows += [("l_max", l_max), ("l", l), ("q", q),
             ("improvement_threshold", improvement_threshold(
                 b2, cfg.global_divergence, cfg.grad_bound_device, cfg.n_uavs, n_total)),
             ("improvement_holds", improvement_condition(
                 b2, b3, cfg.global_divergence, cfg.grad_bound_device, cfg.n_uavs, n_total,
                 cfg.bound_m))]
    out.write("bound", ["quantity", "value"], rows)
    surface = bound_delta_surface(cfg.b2_grid, cfg.b3_grid, base, l, q) if q > 0 else None
    srows = []
    if surface is not None:
        for i, sb2 in enumerate(cfg.b2_grid):
            for j, sb3 in enumerate(cfg.b3_grid):
                srows.append((sb2, sb3, surface[i, j]))
    out.write("bound_surface", ["b2", "b3", "delta_bound"], srows, {"l": l, "q": q})
    return f"B = ({b1:.4g}, {b2:.4g}, {b3:.4g}); bound {dict(rows)['bound']:.6g}"


COMMANDS = {
    "probe": (cmd_probe, "success probabilities for every node of one layout"),
    "validate": (cmd_validate, "analytic vs Monte Carlo success over a threshold grid"),
    "sweep-height": (cmd_sweep_height, "edge and backhaul success against UAV height"),
    "sweep-uavs": (cmd_sweep_uavs, "average success against the number of UAVs"),
    "train": (cmd_train, "run the training variants and record accuracy traces"),
    "bound": (cmd_bound, "convergence bound terms and the improvement condition"),
    "latency": (cmd_latency, "cumulative latency to the target accuracy per model size"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavhfl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, help="JSON configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--trials", type=int, help="override the Monte Carlo trial count")
        p.add_argument("--variant", help=f"restrict to one of: {', '.join(VARIANTS)}")
    return parser


def _load_config(args) -> ExperimentConfig:
    data = {}
    source = "<defaults>"
    if args.config is not None:
        data = ExperimentConfig.load(args.config).to_dict()
        source = str(args.config)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        data["seed"] = args.seed
    if args.trials is not None:
        data["trials"] = args.trials
    return ExperimentConfig.from_dict(data, source)


def _threads() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if raw in (None, ""):
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.variant is not None and args.variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{args.variant}'; choose from "
                              f"{', '.join(VARIANTS)}")
        fn = COMMANDS[args.command][0]
        out = Output(args.out, cfg, args.command)
        with threadpool_limits(limits=_threads()):
            message = fn(cfg, args, out)
    except ConfigError as exc:
        print(f"uavhfl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgumentError as exc:
        print(f"uavhfl: invalid setting: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ConvergenceError, ZeroMassError) as exc:
        print(f"uavhfl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(message)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
