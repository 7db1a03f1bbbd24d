"""Run configuration.

One JSON document drives every pipeline command, so a run is reproducible
from the config file and the input data alone. No wall-clock values; every
random choice traces back to the explicit seeds recorded here.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .milsurv import POOLINGS, TrainConfig
from .promptprop import PromptCostWeights, PropagationConfig

PHASES = ("pre", "post")


class ConfigError(ValueError):
    """The configuration is malformed or references missing inputs."""


@dataclass(frozen=True)
class CrossValidationPlan:
    folds: int = 3
    repeats: int = 15

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError("cross-validation needs at least 2 folds")
        if self.repeats < 1:
            raise ConfigError("cross-validation needs at least 1 repeat")


@dataclass(frozen=True)
class RunConfig:
    data_dir: str
    output_dir: str
    segmenter: str = "region-grow"
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    phases: tuple[str, ...] = PHASES
    training: TrainConfig = field(default_factory=TrainConfig)
    cross_validation: CrossValidationPlan = field(default_factory=CrossValidationPlan)
    seed: int = 0

    def __post_init__(self):
        if not self.phases or any(p not in PHASES for p in self.phases):
            raise ConfigError(f"phases must be a nonempty subset of {PHASES}")
        if len(set(self.phases)) != len(self.phases):
            raise ConfigError("phases must not repeat")
        if self.training.pooling not in POOLINGS:
            raise ConfigError(f"pooling must be one of {POOLINGS}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")


def _as_dict(config: RunConfig) -> dict:
    def unwrap(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: unwrap(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, tuple):
            return list(obj)
        return obj

    return unwrap(config)


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(_as_dict(config), indent=2) + "\n")


def _build(cls, payload: dict, nested: dict | None = None):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = dict(payload)
    for key, build in (nested or {}).items():
        if key in kwargs:
            kwargs[key] = build(kwargs[key])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _propagation(payload: dict) -> PropagationConfig:
    return _build(
        PropagationConfig,
        payload,
        {"weights": lambda p: _build(PromptCostWeights, p)},
    )


def config_from_dict(payload: dict) -> RunConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config must be a JSON object")
    for required in ("data_dir", "output_dir"):
        if required not in payload:
            raise ConfigError(f"config missing required key {required!r}")
    payload = dict(payload)
    if "phases" in payload:
        payload["phases"] = tuple(payload["phases"])
    return _build(
        RunConfig,
        payload,
        {
            "propagation": _propagation,
            "training": lambda p: _build(TrainConfig, p),
            "cross_validation": lambda p: _build(CrossValidationPlan, p),
        },
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(payload)
