"""Run configuration: one dataclass tree covering every tunable, built from
defaults + optional TOML file + dotted CLI overrides, hashed into artifacts.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from importlib import resources

from .controllers.baseline2 import Baseline2Config, Baseline2Hyper
from .controllers.policy import PolicyHyper
from .controllers.vae import TrainHyper, VaeConfig
from .dagger import CorridorScenario
from .estimator import EkfParams
from .oracle import ExpertConfig
from .render import AugmentParams, CameraModel
from .sensors import NoiseParams
from .session import SimRates, SimStackConfig, WindParams
from .vehicle import CascadeGains, VehicleParams
from .world import OrchardParams


@dataclass(frozen=True)
class DaggerSettings:
    iterations: int = 3
    speed_target: float = 0.6
    max_steps: int = 9000
    workers: int = 2
    baseline2_train_stride: int = 3
    ridge_lambda: float = 10.0


@dataclass(frozen=True)
class EvalSettings:
    flights: int = 10
    speeds: tuple[float, ...] = (0.6, 0.8, 1.0)
    speed_flights: int = 4


@dataclass(frozen=True)
class VaeDataSettings:
    frames: int = 2000
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    world: OrchardParams = OrchardParams()
    stack: SimStackConfig = SimStackConfig()
    expert: ExpertConfig = ExpertConfig()
    vae: VaeConfig = VaeConfig()
    vae_data: VaeDataSettings = VaeDataSettings()
    augment: AugmentParams = AugmentParams()
    policy_hyper: PolicyHyper = PolicyHyper()
    baseline2: Baseline2Config = Baseline2Config()
    baseline2_hyper: Baseline2Hyper = Baseline2Hyper()
    dagger: DaggerSettings = DaggerSettings()
    eval: EvalSettings = EvalSettings()
    seed: int = 0
    output_dir: str = "runs"


def config_to_dict(obj):
    if is_dataclass(obj):
        return {f.name: config_to_dict(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [config_to_dict(v) for v in obj]
    return obj


def _coerce(value, target_type, current):
    """Best-effort coercion of a TOML value onto an existing field's shape."""
    if is_dataclass(current) and isinstance(value, dict):
        return _merge_dataclass(current, value)
    if isinstance(current, tuple):
        if current and isinstance(current[0], tuple):
            return tuple(tuple(v) for v in value)
        return tuple(value)
    return value


def _merge_dataclass(instance, overrides: dict):
    updates = {}
    names = {f.name: f for f in fields(instance)}
    for key, value in overrides.items():
        if key not in names:
            raise KeyError(f"unknown config key {key!r} for {type(instance).__name__}")
        updates[key] = _coerce(value, names[key].type, getattr(instance, key))
    return dataclasses.replace(instance, **updates)


def load_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then TOML file, then dotted key=value overrides."""
    config = RunConfig()
    if path is not None:
        doc = tomllib.loads(Path(path).read_text())
        config = _merge_dataclass(config, doc)
    for item in overrides or []:
        key, _, raw = item.partition("=")
        if not _:
            raise ValueError(f"override {item!r} must look like a.b.c=value")
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw
        parts = key.strip().split(".")
        nested = value
        for part in reversed(parts[1:]):
            nested = {part: nested}
        config = _merge_dataclass(config, {parts[0]: nested})
    return config


def config_hash(config: RunConfig) -> str:
    blob = json.dumps(config_to_dict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def stack_from_dict(doc: dict) -> SimStackConfig:
    return _merge_dataclass(SimStackConfig(), doc)


def world_params_from_dict(doc: dict) -> OrchardParams:
    return _merge_dataclass(OrchardParams(), doc)


# -------------------------------------------------------------------- suites

def _preset_text(name: str) -> str:
    try:
        return resources.files("orchardnav.presets").joinpath(f"{name}.toml").read_text()
    except FileNotFoundError:
        raise KeyError(f"unknown scenario suite {name!r}")


def load_suite(name: str) -> list[CorridorScenario]:
    """Scenario suite from the packaged preset files (or a TOML path)."""
    if name.endswith(".toml") and Path(name).exists():
        doc = tomllib.loads(Path(name).read_text())
    else:
        doc = tomllib.loads(_preset_text(name))
    scenarios = []
    for entry in doc["corridor"]:
        entry = dict(entry)
        scenario_name = entry.pop("name")
        palette = entry.pop("palette", None)
        corridor_index = entry.pop("corridor_index", 0)
        params = world_params_from_dict(entry)
        if palette is not None:
            params = dataclasses.replace(params, palette_id=palette)
        scenarios.append(CorridorScenario(name=scenario_name, world_params=params,
                                          corridor_index=corridor_index,
                                          palette_id=palette))
    return scenarios
