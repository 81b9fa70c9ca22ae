"""Experiment configuration files (YAML) and object construction."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from ..algorithm import IopeaConfig, epsilon_net
from ..core import Environment
from ..envs import DemandModel, DsParams, DualSourcingEnv, InventoryEnv, InvParams, QueueEnv, QueueParams

ALGORITHMS = ("iopea", "random", "trivial", "erm")
ENVIRONMENTS = ("inventory", "dualsource", "queue")


class ConfigError(ValueError):
    pass


@dataclass
class OracleSettings:
    radius: float = 0.1
    eval_horizon: int = 1_000_000
    seeds: int = 20
    policy_eval_horizon: int = 100_000
    policy_eval_seeds: int = 4
    g_star: Optional[float] = None


@dataclass
class ExperimentConfig:
    name: str
    env: dict
    algorithm: str = "iopea"
    horizon: int = 100_000
    replicates: int = 20
    seed: int = 0
    iopea: dict = field(default_factory=dict)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    downsample: float = 1.2
    workers: int = 1
    output_dir: str = "results"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.env.get("kind") not in ENVIRONMENTS:
            raise ConfigError(f"env.kind must be one of {ENVIRONMENTS}")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.downsample <= 1.0:
            raise ConfigError("downsample factor must exceed 1")
        unknown = set(self.iopea) - {"delta", "beta_scale", "t_h", "radius", "span", "restart_cap"}
        if unknown:
            raise ConfigError(f"unknown iopea settings {sorted(unknown)}")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        out = copy.deepcopy(self)
        for k, v in kw.items():
            if v is not None:
                setattr(out, k, v)
        out.__post_init__()
        return out


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return config_from_dict(raw, default_name=path.stem)


def config_from_dict(raw: dict, default_name: str = "experiment") -> ExperimentConfig:
    raw = dict(raw)
    try:
        oracle = OracleSettings(**raw.pop("oracle", {}) or {})
        name = raw.pop("name", default_name)
        env = raw.pop("env")
        return ExperimentConfig(name=name, env=dict(env), oracle=oracle, **raw)
    except KeyError as err:
        raise ConfigError(f"missing field {err}") from None
    except TypeError as err:
        raise ConfigError(str(err)) from None


def build_env(cfg: ExperimentConfig) -> Environment:
    spec = dict(cfg.env)
    kind = spec.pop("kind")
    try:
        if kind == "queue":
            if "power" in spec and isinstance(spec["power"], str):
                spec["power"] = _power_table(spec["power"], int(spec.get("a_max", 3)))
            if "power" in spec:
                spec["power"] = tuple(float(x) for x in spec["power"])
            return QueueEnv(QueueParams(**spec))
        demand = DemandModel.from_dict(spec.pop("demand", {}))
        if kind == "inventory":
            return InventoryEnv(InvParams(demand=demand, **spec))
        return DualSourcingEnv(DsParams(demand=demand, **spec))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"env: {err}") from None


def _power_table(expr: str, a_max: int) -> list[float]:
    if expr == "square":
        return [float(a * a) for a in range(a_max + 1)]
    if expr == "linear":
        return [float(a) for a in range(a_max + 1)]
    raise ConfigError(f"unknown power table {expr!r}")


def iopea_config(cfg: ExperimentConfig, env: Environment) -> IopeaConfig:
    it = cfg.iopea
    return IopeaConfig(
        horizon=cfg.horizon,
        delta=float(it.get("delta", 0.1)),
        radius=None if it.get("radius") is None else float(it["radius"]),
        span=None if it.get("span") is None else float(it["span"]),
        t_h_value=None if it.get("t_h") is None else int(it["t_h"]),
        beta_scale=float(it.get("beta_scale", 1.0)),
        restart_cap=None if it.get("restart_cap") is None else int(it["restart_cap"]),
    ).resolved(env)


def learner_grid(env: Environment, icfg: IopeaConfig) -> np.ndarray:
    return epsilon_net(env.lower, env.upper, icfg.r, integer=isinstance(env, QueueEnv))


def oracle_grid(env: Environment, cfg: ExperimentConfig) -> np.ndarray:
    return epsilon_net(env.lower, env.upper, cfg.oracle.radius, integer=isinstance(env, QueueEnv))


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    return {
        "name": cfg.name,
        "env": cfg.env,
        "algorithm": cfg.algorithm,
        "horizon": cfg.horizon,
        "replicates": cfg.replicates,
        "seed": cfg.seed,
        "iopea": cfg.iopea,
        "oracle": cfg.oracle.__dict__,
        "downsample": cfg.downsample,
        "workers": cfg.workers,
        "output_dir": cfg.output_dir,
    }
