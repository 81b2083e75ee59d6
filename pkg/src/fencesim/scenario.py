"""Scenario files: JSON schema, strict loading, and construction of the simulation objects."""

from __future__ import annotations

import dataclasses
import json
import math
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Invalid scenario content; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class FieldCfg:
    width: float = 25.0
    height: float = 25.0


@dataclass
class PirCfg:
    max_distance: float = 7.0
    base_diameter: float = 5.0


@dataclass
class LayoutCfg:
    kind: str = "B"
    spacing: Optional[float] = None
    heights: Optional[list[float]] = None
    row_gap: Optional[float] = None
    max_gap: Optional[float] = None


@dataclass
class MotionCfg:
    sample_step: float = 0.1
    retrigger: float = 5.0


@dataclass
class LinkCfg:
    profile: str = "s35-r200-500m"
    jitter: float = 0.1
    slot_duration: float = 1.0
    queue_capacity: int = 16
    downlink_latency: float = 1.0
    nodes: dict[str, str] = field(default_factory=dict)


@dataclass
class PredictorCfg:
    time_threshold: float = 120.0
    time_tolerance: float = 0.1
    latency: float = 5.0
    compute_time: float = 0.01


@dataclass
class CameraCfg:
    position: list[float] = field(default_factory=lambda: [12.5, 12.5])
    hfov: float = 105.0
    vfov: Optional[float] = None
    resolution: list[int] = field(default_factory=lambda: [2592, 1944])
    angular_speed: float = 90.0
    capture_time: float = 1.0
    model: str = "MobileNet"
    model_latency: Optional[float] = None
    initial_bearing: float = 0.0
    sides: Optional[list[str]] = None


@dataclass
class AnimalCfg:
    size: list[float] = field(default_factory=lambda: [2.0, 1.5])
    species: str = "wild boar"


@dataclass
class NotifyCfg:
    lte_delay: list[float] = field(default_factory=lambda: [0.1, 0.6])


@dataclass
class EvaluationCfg:
    camera_distances: list[float] = field(default_factory=lambda: [5.0, 10.0, 15.0])


@dataclass
class BudgetStepCfg:
    name: str
    min: float
    max: float


@dataclass
class CostItemCfg:
    device: str
    unit_cost: float
    quantity: float = 1


@dataclass
class Scenario:
    version: int = SCHEMA_VERSION
    name: str = "scenario"
    seed: int = 0
    field: FieldCfg = dataclasses.field(default_factory=FieldCfg)
    pir: PirCfg = dataclasses.field(default_factory=PirCfg)
    layouts: list[LayoutCfg] = dataclasses.field(default_factory=lambda: [LayoutCfg()])
    grid_resolution: float = 0.25
    band: Optional[float] = None
    trajectories: Optional[str] = None
    movements: Optional[list[str]] = None
    motion: MotionCfg = dataclasses.field(default_factory=MotionCfg)
    link: LinkCfg = dataclasses.field(default_factory=LinkCfg)
    predictor: PredictorCfg = dataclasses.field(default_factory=PredictorCfg)
    camera: CameraCfg = dataclasses.field(default_factory=CameraCfg)
    animal: AnimalCfg = dataclasses.field(default_factory=AnimalCfg)
    notify: NotifyCfg = dataclasses.field(default_factory=NotifyCfg)
    evaluation: EvaluationCfg = dataclasses.field(default_factory=EvaluationCfg)
    budget: Optional[list[BudgetStepCfg]] = None
    cost: Optional[list[CostItemCfg]] = None
    output: Optional[str] = None
    # directory of the scenario file; relative paths resolve against it
    base_dir: Path = dataclasses.field(default=Path("."), metadata={"internal": True})


def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        inner = [a for a in args if a is not type(None)]
        if value is None:
            return None
        return _convert(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, path)
    if origin is list:
        if not isinstance(value, list):
            raise ScenarioError(path, f"expected a list, got {type(value).__name__}")
        return [_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, dict):
            raise ScenarioError(path, f"expected an object, got {type(value).__name__}")
        return {str(k): _convert(args[1], v, f"{path}.{k}") for k, v in value.items()}
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioError(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ScenarioError(path, "must be finite")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(path, f"expected an integer, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ScenarioError(path, f"expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported schema type {tp!r}")


def from_dict(cls, data: Any, path: str = "$"):
    if not isinstance(data, dict):
        raise ScenarioError(path, f"expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if not f.metadata.get("internal")}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ScenarioError(f"{path}.{unknown[0]}", "unknown key")
    kwargs = {}
    for name, f in fields.items():
        if name in data:
            kwargs[name] = _convert(hints[name], data[name], f"{path}.{name}")
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ScenarioError(f"{path}.{name}", "required")
    return cls(**kwargs)


def to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        if f.metadata.get("internal"):
            continue
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            v = to_dict(v)
        elif isinstance(v, list):
            v = [to_dict(x) if dataclasses.is_dataclass(x) else x for x in v]
        out[f.name] = v
    return out


def parse_scenario(data: Any, base_dir: Path | str = ".") -> Scenario:
    sc = from_dict(Scenario, data)
    if sc.version != SCHEMA_VERSION:
        raise ScenarioError("$.version", f"unsupported version {sc.version} (expected {SCHEMA_VERSION})")
    sc.base_dir = Path(base_dir)
    return sc


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file.

    Raises ``OSError`` / ``json.JSONDecodeError`` for unreadable files and
    :class:`ScenarioError` for schema problems.
    """
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    sc = parse_scenario(data, path.parent)
    env_seed = os.environ.get("FENCESIM_SEED")
    if env_seed is not None:
        try:
            sc.seed = int(env_seed)
        except ValueError:
            raise ScenarioError("FENCESIM_SEED", f"not an integer: {env_seed!r}") from None
    return sc


def resolve(sc: Scenario, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else sc.base_dir / p
