"""Scripted animal trajectories and the detection events they trigger."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .geometry import Point, PositionMap, SensorLayout, signature_key


@dataclass(frozen=True)
class TrajectoryScript:
    """Piecewise-linear path through ``(x, y, t)`` waypoints."""

    id: str
    waypoints: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError(f"{self.id}: need at least 2 waypoints")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if not b[2] > a[2]:
                raise ValueError(f"{self.id}: waypoint times must be strictly increasing")
        if not all(math.isfinite(v) for w in self.waypoints for v in w):
            raise ValueError(f"{self.id}: non-finite waypoint")

    @classmethod
    def from_dict(cls, data: dict) -> "TrajectoryScript":
        return cls(str(data["id"]), tuple((float(x), float(y), float(t)) for x, y, t in data["waypoints"]))

    def to_dict(self) -> dict:
        return {"id": self.id, "waypoints": [list(w) for w in self.waypoints]}

    @property
    def start(self) -> float:
        return self.waypoints[0][2]

    @property
    def end(self) -> float:
        return self.waypoints[-1][2]

    def position_at(self, t: float) -> Point:
        if not (self.start <= t <= self.end):
            raise ValueError(f"{self.id}: t={t} outside [{self.start}, {self.end}]")
        times = [w[2] for w in self.waypoints]
        i = int(np.searchsorted(times, t, side="right")) - 1
        if i >= len(self.waypoints) - 1:
            x, y, _ = self.waypoints[-1]
            return (x, y)
        x0, y0, t0 = self.waypoints[i]
        x1, y1, t1 = self.waypoints[i + 1]
        a = (t - t0) / (t1 - t0)
        return (x0 + a * (x1 - x0), y0 + a * (y1 - y0))

    def positions(self, times) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised :meth:`position_at` for times inside the span."""
        w = np.asarray(self.waypoints)
        return np.interp(times, w[:, 2], w[:, 0]), np.interp(times, w[:, 2], w[:, 1])

    def clamped_position(self, t: float) -> Point:
        return self.position_at(min(max(t, self.start), self.end))

    def scaled(self, factor: float) -> "TrajectoryScript":
        return TrajectoryScript(self.id, tuple((x, y, t * factor) for x, y, t in self.waypoints))

    def reversed(self) -> "TrajectoryScript":
        t_end, t_start = self.end, self.start
        return TrajectoryScript(
            self.id, tuple((x, y, t_start + t_end - t) for x, y, t in reversed(self.waypoints))
        )


def load_scripts(path: str | Path) -> list[TrajectoryScript]:
    """Read one script object or a list of them from JSON."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data.get("movements", [data])
    return [TrajectoryScript.from_dict(d) for d in data]


@dataclass(frozen=True)
class DetectionEvent:
    sensor_ids: frozenset[str]
    representative: Point
    true_time: float
    true_position: Point


def generate_detections(
    script: TrajectoryScript,
    layout: SensorLayout,
    position_map: PositionMap,
    sample_step: float = 0.1,
    retrigger: float = 5.0,
) -> list[DetectionEvent]:
    """Sample the path and emit an event per signature change or retrigger period.

    A new non-empty signature fires immediately unless it repeats the previous
    event's signature within ``retrigger`` seconds.  A signature held without
    change fires again every ``retrigger`` seconds.
    """
    if not sample_step > 0:
        raise ValueError("sample_step must be positive")
    if retrigger < sample_step:
        raise ValueError("retrigger must be >= sample_step")
    n = int(math.floor((script.end - script.start) / sample_step + 1e-9))
    times = script.start + np.arange(n + 1) * sample_step
    xs, ys = script.positions(times)
    cover = layout.coverage_matrix(xs, ys)
    ids = np.asarray(layout.sensor_ids)
    events: list[DetectionEvent] = []
    prev_row = np.zeros(len(ids), dtype=bool)
    last_sig: frozenset = frozenset()
    last_t = -math.inf
    for k in range(n + 1):
        row = cover[k]
        changed = not np.array_equal(row, prev_row)
        prev_row = row
        if not row.any():
            continue
        t = float(times[k])
        if changed:
            sig = frozenset(ids[row].tolist())
        elapsed = t - last_t
        if sig == last_sig and elapsed < retrigger - 1e-9:
            continue
        if changed or elapsed >= retrigger - 1e-9:
            pos = (float(xs[k]), float(ys[k]))
            events.append(DetectionEvent(sig, position_map.lookup(sig), t, pos))
            last_sig, last_t = sig, t
    return events


def detections_csv(rows: Iterable[tuple[str, list[DetectionEvent]]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["scriptId", "eventIndex", "sensorIds", "repX", "repY", "trueX", "trueY", "trueTime"])
    for script_id, events in rows:
        for i, e in enumerate(events):
            w.writerow(
                [
                    script_id,
                    i,
                    signature_key(e.sensor_ids),
                    repr(e.representative[0]),
                    repr(e.representative[1]),
                    repr(e.true_position[0]),
                    repr(e.true_position[1]),
                    repr(e.true_time),
                ]
            )
    return buf.getvalue()
