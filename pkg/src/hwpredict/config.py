"""Configuration: all tunables with their defaults, YAML round-tripping and
strict validation (unknown keys rejected, ranges checked)."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .bayes import BayesParams
from .mdn import TrainParams
from .pursuit import PursuitParams


@dataclass(frozen=True)
class FeatureParams:
    radius: float = 60.0  # m, neighbourhood radius


@dataclass(frozen=True)
class EvalParams:
    history_seconds: float = 3.0
    horizon_seconds: float = 5.0
    stride_seconds: float = 1.0


@dataclass(frozen=True)
class Config:
    pursuit: PursuitParams = field(default_factory=PursuitParams)
    bayes: BayesParams = field(default_factory=BayesParams)
    features: FeatureParams = field(default_factory=FeatureParams)
    eval: EvalParams = field(default_factory=EvalParams)
    train_follow: TrainParams = field(default_factory=lambda: TrainParams(
        lr=1e-3, batch=1024, epochs=10))
    train_change: TrainParams = field(default_factory=lambda: TrainParams(
        lr=1e-3, batch=32, epochs=20))


_RANGE_CHECKS = {
    ("pursuit", "lookahead"): lambda v: v > 0,
    ("pursuit", "gain"): lambda v: v > 0,
    ("pursuit", "delay_steps"): lambda v: v >= 0,
    ("pursuit", "max_accel"): lambda v: v > 0,
    ("pursuit", "max_jerk"): lambda v: v > 0,
    ("pursuit", "dt"): lambda v: v > 0,
    ("pursuit", "horizon"): lambda v: v > 0,
    ("bayes", "sigma_x"): lambda v: v > 0,
    ("bayes", "sigma_y"): lambda v: v > 0,
    ("bayes", "sigma_phi"): lambda v: v > 0,
    ("bayes", "penalty_rate"): lambda v: v >= 0,
    ("bayes", "forgetting"): lambda v: 0 <= v <= 1,
    ("features", "radius"): lambda v: v > 0,
    ("eval", "stride_seconds"): lambda v: v > 0,
}


class ConfigError(ValueError):
    pass


def _build_section(cls, data: dict, section: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        expected = fields[name].type
        if expected in ("int", int) and not isinstance(value, int):
            raise ConfigError(f"[{section}] {name}: expected int, got {value!r}")
        if expected in ("float", float):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"[{section}] {name}: expected number, got {value!r}")
            value = float(value)
        check = _RANGE_CHECKS.get((section, name))
        if check and not check(value):
            raise ConfigError(f"[{section}] {name}: value {value!r} out of range")
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> Config:
    sections = {f.name: f for f in dataclasses.fields(Config)}
    unknown = set(data) - set(sections)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        if not isinstance(value, dict):
            raise ConfigError(f"config section [{name}] must be a mapping")
        cls = type(getattr(Config(), name))
        kwargs[name] = _build_section(cls, value, name)
    tau_ok = True
    cfg = Config(**kwargs)
    if cfg.pursuit.delay_steps * cfg.pursuit.dt >= cfg.pursuit.horizon:
        tau_ok = False
    if not tau_ok:
        raise ConfigError("pursuit: delay_steps * dt must be below the horizon")
    return cfg


def config_to_dict(cfg: Config) -> dict:
    return {f.name: dataclasses.asdict(getattr(cfg, f.name))
            for f in dataclasses.fields(cfg)}


def load_config(path) -> Config:
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    return config_from_dict(data)


def save_config(cfg: Config, path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(cfg), f, sort_keys=True)
