"""Evaluation methodology: triplet offsets, accuracy tables, latency budget and cost sheet."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

from .predictor import Fix, predict

Point = tuple[float, float]


@dataclass(frozen=True)
class OffsetSample:
    movement_id: str
    triplet: tuple[int, int, int]
    predicted: Point
    actual: Point
    offset: float


PredictFn = Callable[[Fix, Fix, float], Point]


def _alg1(current: Fix, previous: Fix, lead: float) -> Point:
    return predict(current, previous, lead).predicted


def triplet_offsets(
    readings: Sequence[Fix | tuple[float, float, float]],
    predict_fn: PredictFn = _alg1,
    movement_id: str = "",
) -> list[OffsetSample]:
    """Predict reading k from readings i < j (lead ``t_k - t_j``) for every triplet.

    Fewer than three readings yields an empty list; callers treat that movement
    as having insufficient readings.
    """
    fixes = [Fix(*r) for r in readings]
    for a, b in zip(fixes, fixes[1:]):
        if b.t < a.t:
            raise ValueError("readings must be time-ordered")
    out = []
    for i, j, k in itertools.combinations(range(len(fixes)), 3):
        fi, fj, fk = fixes[i], fixes[j], fixes[k]
        p = predict_fn(fj, fi, fk.t - fj.t)
        out.append(OffsetSample(movement_id, (i, j, k), p, (fk.x, fk.y), math.hypot(p[0] - fk.x, p[1] - fk.y)))
    return out


def average_offset(samples: Sequence[OffsetSample]) -> Optional[float]:
    if not samples:
        return None
    return math.fsum(s.offset for s in samples) / len(samples)


def accuracy_table(
    avg_offsets: Mapping[str, Optional[float]] | Sequence[Optional[float]],
    camera_distances: Sequence[float] = (5.0, 10.0, 15.0),
    hfov: float = 105.0,
) -> dict[float, float]:
    """Percent of movements whose mean offset stays inside half the FOV at each camera distance.

    ``None`` marks a movement without enough readings; it fails at every distance.
    """
    values = list(avg_offsets.values()) if isinstance(avg_offsets, Mapping) else list(avg_offsets)
    total = len(values)
    half = math.radians(hfov) / 2
    table = {}
    for d in camera_distances:
        if not d > 0:
            raise ValueError("camera distance must be positive")
        hits = sum(1 for v in values if v is not None and math.atan(v / d) <= half + 1e-12)
        table[float(d)] = 100.0 * hits / total if total else 0.0
    return table


@dataclass(frozen=True)
class BudgetStep:
    name: str
    min: float
    max: float


# detection-to-farmer steps, seconds
DEFAULT_LATENCY_STEPS = (
    BudgetStep("Transmission of 3 sets of data via Lora", 3.0, 9.0),
    BudgetStep("Latency between 3 readings", 10.0, 10.0),
    BudgetStep("Prediction with proposed algorithm", 0.01, 0.01),
    BudgetStep("Instruction sent to camera via LoRa", 1.0, 1.0),
    BudgetStep("Camera rotation, image capture and processing", 4.0, 7.0),
    BudgetStep("Results sent back to fog server via LoRa", 1.0, 1.0),
    BudgetStep("Alert sent to farmer via LTE", 0.1, 0.6),
)


@dataclass(frozen=True)
class LatencyBudget:
    steps: tuple[BudgetStep, ...]
    total_min: float
    total_max: float


def latency_budget(steps: Sequence[BudgetStep] = DEFAULT_LATENCY_STEPS) -> LatencyBudget:
    for s in steps:
        if s.min < 0 or s.max < 0 or s.min > s.max:
            raise ValueError(f"bad latency range for {s.name!r}: ({s.min}, {s.max})")
    return LatencyBudget(
        tuple(steps),
        round(math.fsum(s.min for s in steps), 9),
        round(math.fsum(s.max for s in steps), 9),
    )


@dataclass(frozen=True)
class CostItem:
    device: str
    unit_cost: float
    quantity: float = 1

    @property
    def total(self) -> float:
        return self.unit_cost * self.quantity


DEFAULT_COST_ITEMS = (
    CostItem("Arduino Shield for LoRa", 28.0, 2),
    CostItem("Raspberry Pi 4", 95.0, 1),
    CostItem("GPS Concentrator", 120.0, 1),
    CostItem("PIR Sensor", 0.75, 36),
    CostItem("Camera", 25.0, 1),
    CostItem("Laptop", 500.0, 1),
)


@dataclass(frozen=True)
class CostSheet:
    items: tuple[CostItem, ...]
    total: float


def cost_sheet(items: Sequence[CostItem] = DEFAULT_COST_ITEMS) -> CostSheet:
    for it in items:
        if it.quantity < 0 or it.unit_cost < 0:
            raise ValueError(f"negative cost entry for {it.device!r}")
    return CostSheet(tuple(items), round(math.fsum(it.total for it in items), 9))


def fmt_number(v: float) -> str:
    """Two decimals at most, trailing zeros dropped: 823.0 -> '823', 19.11 -> '19.11'."""
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s
