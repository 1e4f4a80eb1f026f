"""Experiment configuration: a flat JSON namespace with strict keys."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional

from .errors import ConfigError, InvalidArgumentError
from .geometry import ChannelParams, NetworkParams, ResourceConfig
from .quadrature import QuadratureSpec


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass
class ExperimentConfig:
    # network and channel
    n_devices: int = 50
    n_uavs: int = 10
    radius: float = 500.0
    height: float = 120.0
    p_device: float = 0.75
    p_uav: float = 1.5
    alpha_los: float = 2.0
    alpha_nlos: float = 3.5
    noise: float = 4.14e-6
    a: float = 9.61
    b: float = 0.16
    m_los: int = 4
    m_nlos: int = 1
    m_direct: int = 2
    alpha_direct: float = 2.5
    theta_db: float = -5.0
    rb_bs: int = 5
    rb_uav: int = 15
    rb_direct: int = 20
    bandwidth_device: float = 1e6
    bandwidth_uav: float = 1e6
    # analytic evaluation
    cdf: str = "exact"
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    max_subdivisions: int = 512
    # learning
    learning_rate: float = 0.01
    batch_size: int = 64
    local_period: int = 2
    global_period: int = 2
    total_iterations: int = 2000
    hidden: int = 64
    variants: list = field(default_factory=lambda: [
        "unbiased-hfl", "conventional-hfl", "unbiased-fedavg", "fedavg"])
    channel: str = "montecarlo"
    los_policy: str = "resample"
    probability_floor: float = 1e-3
    target_accuracy: float = 0.85
    eval_every: int = 1
    # data
    dataset: str = "synthetic"
    samples_per_device: int = 200
    n_classes: int = 10
    input_dim: int = 32
    separation: float = 1.0
    labels_per_device: int = 1
    idx_images: str = ""
    idx_labels: str = ""
    # latency
    cpu_cycles_per_sample: float = 20.0
    cpu_frequency: float = 2e9
    model_bits: int = 0
    model_bits_grid: list = field(default_factory=lambda: [2e5, 4e5, 6e5, 8e5, 1e6])
    # sweeps
    seed: int = 0
    trials: int = 50_000
    n_pairs: int = 5
    theta_grid_db: list = field(default_factory=lambda: [-20, -15, -10, -5, 0, 5, 10])
    height_grid: list = field(default_factory=lambda: list(range(10, 1001, 10)))
    pair_device_xy: list = field(default_factory=lambda: [400.0, 0.0])
    pair_uav_xy: list = field(default_factory=lambda: [200.0, 0.0])
    uav_grid: list = field(default_factory=lambda: [5, 8, 10, 12, 15, 18, 20])
    n_layouts: int = 6
    sweep_train: bool = False
    # convergence bound
    lipschitz: float = 1.0
    upward_divergence: float = 1.0
    downward_divergence: float = 1.0
    global_divergence: float = 1.0
    grad_bound_uav: float = 1.0
    grad_bound_device: float = 1.0
    initial_gap: float = 1.0
    bound_m: float = 1.0
    bound_l: float = 2.0
    b2_grid: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    b3_grid: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    appendix_constants: bool = False

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: str = "<config>") -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: top level must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"{source}: unknown key '{key}'")
            kwargs[key] = _coerce(key, value, cls.__dataclass_fields__[key], source)
        cfg = cls(**kwargs)
        cfg.validate(source)
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(data, str(path))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def validate(self, source: str = "<config>") -> None:
        try:
            self.network()
            self.quadrature()
        except InvalidArgumentError as exc:
            raise ConfigError(f"{source}: {exc}") from exc
        if self.cdf not in ("exact", "alzer"):
            raise ConfigError(f"{source}: key 'cdf' must be 'exact' or 'alzer'")
        if self.dataset not in ("synthetic", "idx"):
            raise ConfigError(f"{source}: key 'dataset' must be 'synthetic' or 'idx'")
        if self.dataset == "idx" and not (self.idx_images and self.idx_labels):
            raise ConfigError(f"{source}: idx dataset needs 'idx_images' and 'idx_labels'")
        for key in ("trials", "n_pairs", "n_layouts", "samples_per_device", "total_iterations"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{source}: key '{key}' must be >= 1")
        for key in ("pair_device_xy", "pair_uav_xy"):
            if len(getattr(self, key)) != 2:
                raise ConfigError(f"{source}: key '{key}' must hold two coordinates")
        if not 0 < self.target_accuracy <= 1:
            raise ConfigError(f"{source}: key 'target_accuracy' must lie in (0, 1]")

    # -- builders ----------------------------------------------------------

    @property
    def theta(self) -> float:
        return db_to_linear(self.theta_db)

    def channel_params(self) -> ChannelParams:
        return ChannelParams(
            alpha_los=self.alpha_los, alpha_nlos=self.alpha_nlos, m_los=self.m_los,
            m_nlos=self.m_nlos, a=self.a, b=self.b, p_device=self.p_device,
            p_uav=self.p_uav, noise=self.noise, theta=self.theta,
            m_direct=self.m_direct, alpha_direct=self.alpha_direct)

    def network(self, **overrides) -> NetworkParams:
        res = ResourceConfig(rb_bs=self.rb_bs, rb_uav=self.rb_uav, rb_direct=self.rb_direct,
                             bandwidth_device=self.bandwidth_device,
                             bandwidth_uav=self.bandwidth_uav)
        kw = dict(channel=self.channel_params(), resources=res, radius=self.radius,
                  height=self.height, n_devices=self.n_devices, n_uavs=self.n_uavs)
        kw.update(overrides)
        return NetworkParams(**kw)

    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(self.rel_tol, self.abs_tol, self.max_subdivisions)


def _coerce(key, value, f, source):
    default = f.default if f.default is not MISSING else f.default_factory()
    where = f"{source}: key '{key}'"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or not float(value).is_integer():
            raise ConfigError(f"{where} must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or not math.isfinite(value):
            raise ConfigError(f"{where} must be a finite number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        want_str = bool(default) and isinstance(default[0], str)
        for i, item in enumerate(value):
            ok = isinstance(item, str) if want_str else (
                isinstance(item, (int, float)) and not isinstance(item, bool))
            if not ok:
                raise ConfigError(f"{where}[{i}] has the wrong type")
        return list(value)
    return value
