"""Discrete-event run of the whole pipeline and the report it produces.

Per layout and per movement the loop is::

    sense -> uplink (round-robin gateway) -> security -> predictor (fusion, sessions)
          -> possible-invasion alert + downlink -> camera step -> uplink result
          -> confirmed alert

Every movement runs on a fresh pipeline with its own RNG stream spawned from
the scenario seed, so results do not depend on run order.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import camera as cam_mod
from .geometry import (
    FieldSpec,
    PirSpec,
    PositionMap,
    SensorLayout,
    blind_area_fraction,
    build_layout,
    build_position_map,
)
from .harness import (
    DEFAULT_COST_ITEMS,
    DEFAULT_LATENCY_STEPS,
    BudgetStep,
    CostItem,
    CostSheet,
    LatencyBudget,
    OffsetSample,
    accuracy_table,
    average_offset,
    cost_sheet,
    latency_budget,
    triplet_offsets,
)
from .link import Delivery, Gateway, LinkProfile, ReadingMessage, decode_frame, profile, sample_latency, trace_csv
from .motion import DetectionEvent, TrajectoryScript, detections_csv, generate_detections, load_scripts
from .predictor import (
    Alert,
    AlertKind,
    Fix,
    Notifier,
    Prediction,
    Predictor,
    PredictorConfig,
    SecurityGate,
    alerts_csv,
    predictions_csv,
)
from .scenario import Scenario, ScenarioError, resolve

log = logging.getLogger(__name__)

DEFAULT_SPACING = {"A": 5.0, "B": 2.5, "C": 5.0}


class EventQueue:
    """Time-ordered queue; ties resolve in insertion order."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()

    def push(self, t: float, kind: str, payload: Any = None) -> None:
        heapq.heappush(self._heap, (t, next(self._seq), kind, payload))

    def pop(self) -> tuple[float, str, Any]:
        t, _, kind, payload = heapq.heappop(self._heap)
        return t, kind, payload

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class MovementResult:
    movement_id: str
    detections: list[DetectionEvent]
    readings: list[tuple[int, Fix]]
    predictions: list[Prediction]
    steps: list[cam_mod.CameraStep]
    alerts: list[Alert]
    deliveries: list[Delivery]
    offsets: list[OffsetSample]
    avg_offset: Optional[float]
    stale: int
    rejected: int
    # confirmed alert time minus sensing time of the first of its three readings
    end_to_end: list[float] = field(default_factory=list)
    # confirmed alert time minus sensing time of the newest reading behind it
    pipeline: list[float] = field(default_factory=list)
    # camera instructions replaced by a newer one while the camera was busy
    superseded: int = 0

    @property
    def insufficient(self) -> bool:
        return self.avg_offset is None


@dataclass
class LayoutResult:
    layout: SensorLayout
    position_map: PositionMap
    blind_fraction: float
    movements: list[MovementResult]
    accuracy: dict[float, float]

    @property
    def kind(self) -> str:
        return self.layout.kind


@dataclass
class SimReport:
    name: str
    seed: int
    layouts: list[LayoutResult]
    budget: LatencyBudget
    cost: CostSheet
    camera: cam_mod.CameraSpec

    def to_dict(self) -> dict:
        out_layouts = []
        for lr in self.layouts:
            mv = []
            for m in lr.movements:
                mv.append(
                    {
                        "id": m.movement_id,
                        "detections": len(m.detections),
                        "readings": [[s, f.x, f.y, f.t] for s, f in m.readings],
                        "sessions": len({s for s, _ in m.readings}),
                        "predictions": len(m.predictions),
                        "offsetSamples": len(m.offsets),
                        "averageOffset": m.avg_offset,
                        "insufficient": m.insufficient,
                        "alerts": {
                            k.value: sum(1 for a in m.alerts if a.kind is k) for k in AlertKind
                        },
                        "identified": sum(1 for s in m.steps if s.identified),
                        "staleReadings": m.stale,
                        "rejectedFrames": m.rejected,
                        "endToEnd": m.end_to_end,
                        "pipeline": m.pipeline,
                        "supersededInstructions": m.superseded,
                    }
                )
            out_layouts.append(
                {
                    "kind": lr.kind,
                    "sensors": len(lr.layout.sensors),
                    "regions": len(lr.position_map.regions),
                    "blindFraction": lr.blind_fraction,
                    "movements": mv,
                    "accuracy": {fmt_key(d): v for d, v in lr.accuracy.items()},
                    "insufficientMovements": sum(1 for m in lr.movements if m.insufficient),
                    "link": link_stats([d for m in lr.movements for d in m.deliveries]),
                }
            )
        return {
            "name": self.name,
            "seed": self.seed,
            "layouts": out_layouts,
            "latencyBudget": {
                "steps": [[s.name, s.min, s.max] for s in self.budget.steps],
                "totalMin": self.budget.total_min,
                "totalMax": self.budget.total_max,
            },
            "cost": {
                "items": [[i.device, i.unit_cost, i.quantity, i.total] for i in self.cost.items],
                "total": self.cost.total,
            },
            "camera": {
                "position": list(self.camera.position),
                "hfov": self.camera.hfov,
                "vfov": self.camera.vfov,
                "model": self.camera.model.name,
            },
            "alerts": {
                k.value: sum(1 for lr in self.layouts for m in lr.movements for a in m.alerts if a.kind is k)
                for k in AlertKind
            },
            "sessions": sum(len({s for s, _ in m.readings}) for lr in self.layouts for m in lr.movements),
        }

    def files(self) -> dict[str, str]:
        """Report file name -> content."""
        return {
            "report.json": json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            "readings.csv": _readings_csv(self),
            "offsets.csv": _offsets_csv(self),
            "accuracy.csv": _accuracy_csv(self),
            "latency.csv": _latency_csv(self.budget),
            "cost.csv": _cost_csv(self.cost),
            "alerts.csv": alerts_csv((_scope(lr, m), a) for lr in self.layouts for m in lr.movements for a in m.alerts),
            "predictions.csv": predictions_csv(
                (_scope(lr, m), p) for lr in self.layouts for m in lr.movements for p in m.predictions
            ),
            "camera.csv": cam_mod.steps_csv((_scope(lr, m), s) for lr in self.layouts for m in lr.movements for s in m.steps),
            "link.csv": trace_csv((_scope(lr, m), d) for lr in self.layouts for m in lr.movements for d in m.deliveries),
            "detections.csv": detections_csv(
                (_scope(lr, m), m.detections) for lr in self.layouts for m in lr.movements
            ),
        }

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return [atomic_write(out / name, text) for name, text in self.files().items()]


def fmt_key(d: float) -> str:
    return repr(float(d))


def _scope(lr: LayoutResult, m: MovementResult) -> str:
    return f"{lr.kind}/{m.movement_id}"


def link_stats(deliveries: list[Delivery]) -> dict:
    delivered = [d for d in deliveries if not d.dropped]
    lat = [d.arrival - d.enqueued for d in delivered]
    return {
        "frames": len(deliveries),
        "delivered": len(delivered),
        "dropped": len(deliveries) - len(delivered),
        "meanLatency": math.fsum(lat) / len(lat) if lat else None,
        "maxLatency": max(lat) if lat else None,
    }


def atomic_write(path: Path, text: str) -> Path:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _writer():
    buf = io.StringIO()
    return buf, csv.writer(buf, lineterminator="\r\n")


def _readings_csv(rep: SimReport) -> str:
    buf, w = _writer()
    w.writerow(["layout", "movementId", "index", "sessionId", "x", "y", "t"])
    for lr in rep.layouts:
        for m in lr.movements:
            for i, (s, f) in enumerate(m.readings):
                w.writerow([lr.kind, m.movement_id, i, s, repr(f.x), repr(f.y), repr(f.t)])
    return buf.getvalue()


def _offsets_csv(rep: SimReport) -> str:
    buf, w = _writer()
    w.writerow(["layout", "movementId", "i", "j", "k", "xPredict", "yPredict", "xActual", "yActual", "offset"])
    for lr in rep.layouts:
        for m in lr.movements:
            for o in m.offsets:
                w.writerow(
                    [lr.kind, m.movement_id, *o.triplet, repr(o.predicted[0]), repr(o.predicted[1]),
                     repr(o.actual[0]), repr(o.actual[1]), repr(o.offset)]
                )
    return buf.getvalue()


def _accuracy_csv(rep: SimReport) -> str:
    buf, w = _writer()
    w.writerow(["layout", "cameraDistance", "accuracyPercent"])
    for lr in rep.layouts:
        for d, acc in lr.accuracy.items():
            w.writerow([lr.kind, repr(d), f"{acc:.2f}"])
    return buf.getvalue()


def _latency_csv(b: LatencyBudget) -> str:
    buf, w = _writer()
    w.writerow(["step", "minSeconds", "maxSeconds"])
    for s in b.steps:
        w.writerow([s.name, repr(s.min), repr(s.max)])
    w.writerow(["In total", f"{b.total_min:.2f}", f"{b.total_max:.2f}"])
    return buf.getvalue()


def _cost_csv(c: CostSheet) -> str:
    buf, w = _writer()
    w.writerow(["device", "unitCost", "quantity", "lineTotal"])
    for i in c.items:
        w.writerow([i.device, repr(i.unit_cost), repr(i.quantity), f"{i.total:.2f}"])
    w.writerow(["In total", "", "", f"{c.total:.2f}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# building simulation objects from a scenario


@dataclass
class Setup:
    field: FieldSpec
    pir: PirSpec
    layouts: list[SensorLayout]
    band: float
    scripts: list[TrajectoryScript]
    uplinks: dict[str, LinkProfile]
    downlink: LinkProfile
    predictor: PredictorConfig
    compute_time: float
    camera: cam_mod.CameraSpec
    initial_bearing: float
    animal: tuple[float, float]
    species: str
    lte_delay: tuple[float, float]
    camera_distances: list[float]
    budget: LatencyBudget
    cost: CostSheet


def _guard(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScenarioError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        raise ScenarioError(path, str(msg)) from None


def build_setup(sc: Scenario, with_scripts: bool = True) -> Setup:
    field_spec = _guard("$.field", FieldSpec, sc.field.width, sc.field.height)
    pir = _guard("$.pir", PirSpec, sc.pir.max_distance, sc.pir.base_diameter)
    if not sc.layouts:
        raise ScenarioError("$.layouts", "at least one layout is required")
    layouts = []
    for i, lc in enumerate(sc.layouts):
        kind = lc.kind.upper()
        if kind not in DEFAULT_SPACING:
            raise ScenarioError(f"$.layouts[{i}].kind", f"unknown layout kind {lc.kind!r}")
        spacing = lc.spacing if lc.spacing is not None else DEFAULT_SPACING[kind]
        layouts.append(
            _guard(
                f"$.layouts[{i}]",
                build_layout,
                field_spec,
                pir,
                kind,
                spacing,
                heights=lc.heights,
                row_gap=lc.row_gap,
                max_gap=lc.max_gap,
            )
        )
    if not (sc.grid_resolution > 0 and sc.grid_resolution <= pir.base_diameter / 4):
        raise ScenarioError("$.grid_resolution", f"must be in (0, {pir.base_diameter / 4}]")
    band = sc.band if sc.band is not None else pir.base_diameter / 2
    if not band > 0:
        raise ScenarioError("$.band", "must be positive")

    scripts: list[TrajectoryScript] = []
    if with_scripts and sc.trajectories is not None:
        path = resolve(sc, sc.trajectories)
        try:
            scripts = load_scripts(path)
        except (OSError, json.JSONDecodeError):
            raise  # I/O errors, reported as such by the CLI
        except (ValueError, KeyError, TypeError) as exc:
            raise ScenarioError("$.trajectories", f"{path}: {exc}") from None
        ids = [s.id for s in scripts]
        if len(set(ids)) != len(ids):
            raise ScenarioError("$.trajectories", f"{path}: duplicate movement ids")
        if sc.movements is not None:
            by_id = {s.id: s for s in scripts}
            missing = [m for m in sc.movements if m not in by_id]
            if missing:
                raise ScenarioError("$.movements", f"not in {sc.trajectories}: {missing}")
            scripts = [by_id[m] for m in sc.movements]
    elif with_scripts and sc.movements:
        raise ScenarioError("$.movements", "given without a trajectories file")

    m = sc.motion
    if not m.sample_step > 0:
        raise ScenarioError("$.motion.sample_step", "must be positive")
    if m.retrigger < m.sample_step:
        raise ScenarioError("$.motion.retrigger", "must be >= sample_step")

    lk = sc.link
    base = _guard("$.link.profile", profile, lk.profile, lk.jitter)
    uplinks = {}
    for side in field_spec.sides:
        name = lk.nodes.get(side)
        uplinks[side] = base if name is None else _guard(f"$.link.nodes.{side}", profile, name, lk.jitter)
    extra = sorted(set(lk.nodes) - set(field_spec.sides))
    if extra:
        raise ScenarioError(f"$.link.nodes.{extra[0]}", "not a side label")
    if not lk.slot_duration > 0:
        raise ScenarioError("$.link.slot_duration", "must be positive")
    if lk.queue_capacity < 1:
        raise ScenarioError("$.link.queue_capacity", "must be >= 1")
    downlink = _guard("$.link.downlink_latency", base.with_base, lk.downlink_latency)

    pc = sc.predictor
    pred_cfg = _guard("$.predictor", PredictorConfig, pc.time_threshold, pc.time_tolerance, pc.latency)
    if pc.compute_time < 0:
        raise ScenarioError("$.predictor.compute_time", "must be non-negative")

    cc = sc.camera
    if len(cc.position) != 2:
        raise ScenarioError("$.camera.position", "expected [x, y]")
    if len(cc.resolution) != 2:
        raise ScenarioError("$.camera.resolution", "expected [width, height]")
    model = _guard("$.camera.model", cam_mod.RecognitionModel.named, cc.model, cc.model_latency)
    camera = _guard(
        "$.camera",
        cam_mod.CameraSpec,
        (cc.position[0], cc.position[1]),
        cc.hfov,
        cc.vfov if cc.vfov is not None else cam_mod.VFOV,
        (cc.resolution[0], cc.resolution[1]),
        cc.angular_speed,
        cc.capture_time,
        model,
    )
    if cc.sides is not None and set(cc.sides) - set(field_spec.sides):
        raise ScenarioError("$.camera.sides", "unknown side label")

    if len(sc.animal.size) != 2 or min(sc.animal.size) < 0:
        raise ScenarioError("$.animal.size", "expected [width, height] >= 0")
    lte = sc.notify.lte_delay
    if len(lte) != 2 or not 0 <= lte[0] <= lte[1]:
        raise ScenarioError("$.notify.lte_delay", "expected [min, max] with 0 <= min <= max")
    if not sc.evaluation.camera_distances or min(sc.evaluation.camera_distances) <= 0:
        raise ScenarioError("$.evaluation.camera_distances", "need positive distances")

    steps = DEFAULT_LATENCY_STEPS if sc.budget is None else [BudgetStep(s.name, s.min, s.max) for s in sc.budget]
    budget = _guard("$.budget", latency_budget, steps)
    items = DEFAULT_COST_ITEMS if sc.cost is None else [CostItem(c.device, c.unit_cost, c.quantity) for c in sc.cost]
    cost = _guard("$.cost", cost_sheet, items)

    return Setup(
        field_spec,
        pir,
        layouts,
        band,
        scripts,
        uplinks,
        downlink,
        pred_cfg,
        pc.compute_time,
        camera,
        cc.initial_bearing,
        (sc.animal.size[0], sc.animal.size[1]),
        sc.animal.species,
        (lte[0], lte[1]),
        list(sc.evaluation.camera_distances),
        budget,
        cost,
    )


# ---------------------------------------------------------------------------
# the event loop


def run_movement(
    setup: Setup,
    layout: SensorLayout,
    pmap: PositionMap,
    script: TrajectoryScript,
    rng: np.random.Generator,
    sample_step: float = 0.1,
    retrigger: float = 5.0,
    slot: float = 1.0,
    capacity: int = 16,
) -> MovementResult:
    field_spec = layout.field
    detections = generate_detections(script, layout, pmap, sample_step, retrigger)
    nodes = tuple(field_spec.sides)
    gateway = Gateway(nodes, slot, capacity)
    security = SecurityGate(frozenset(nodes))
    predictor = Predictor(pmap, setup.predictor)
    notifier = Notifier(setup.lte_delay, rng)
    cam = setup.camera
    # longest a fusion partner can trail the window opener at the gateway
    spread = max(p.bounds[1] - p.bounds[0] for p in setup.uplinks.values())
    guard = gateway.cycle + spread + setup.predictor.time_tolerance

    q = EventQueue()
    for ev in detections:
        q.push(ev.true_time, "sense", ev)
    seq = {n: 0 for n in nodes}
    steps: list[cam_mod.CameraStep] = []
    alerted: set[int] = set()
    window_serial = 0
    camera_free = -math.inf
    pending = None
    superseded = 0
    bearing = setup.initial_bearing
    end_to_end: list[float] = []
    pipeline: list[float] = []

    def on_predictions(preds, now: float) -> None:
        for p in preds:
            issued = now + setup.compute_time
            side = field_spec.nearest_side(p.current[:2])
            if p.session_id not in alerted:
                alerted.add(p.session_id)
                notifier.emit(AlertKind.POSSIBLE_INVASION, p.session_id, p.predicted, side, issued)
            q.push(issued + sample_latency(setup.downlink, rng), "camera", (p, side))

    while q:
        now, kind, payload = q.pop()
        if kind == "sense":
            ev: DetectionEvent = payload
            by_side: dict[str, set[int]] = {}
            for sid in ev.sensor_ids:
                by_side.setdefault(sid[:1], set()).add(int(sid[1:]))
            for side in sorted(by_side):
                msg = ReadingMessage(side, frozenset(by_side[side]), ev.true_time, seq[side])
                seq[side] = (seq[side] + 1) & 0xFFFF
                d = gateway.deliver(side, msg.encode(), setup.uplinks[side], now, rng)
                if not d.dropped:
                    q.push(d.arrival, "arrive", (side, d.message))
        elif kind == "arrive":
            node, frame = payload
            if not security.admit(node):
                continue
            msg = decode_frame(frame)
            adm = predictor.admit(msg, now)
            on_predictions(adm.released, now)
            if adm.outcome.value in ("newSession", "accepted"):
                window_serial += 1
                q.push(now + guard, "flush", window_serial)
        elif kind == "flush":
            if payload == window_serial and predictor.pending:
                on_predictions(predictor.flush(now), now)
        elif kind == "camera":
            if now < camera_free:
                # busy: only the newest instruction is worth serving
                if pending is not None:
                    superseded += 1
                pending = payload
                continue
            p, side = payload
            start = now
            target = cam.bearing_to(p.predicted) if p.predicted != cam.position else bearing
            rotate = cam_mod.rotation_time(cam, bearing, target)
            shot = start + rotate
            actual = script.clamped_position(shot)
            if p.predicted == cam.position:
                within = True
            else:
                within = cam_mod.evaluate_pointing(cam, p.predicted, actual).within_fov
            dist = math.hypot(actual[0] - cam.position[0], actual[1] - cam.position[1])
            pixels = cam_mod.pixel_occupancy(cam, max(dist, 1e-3), setup.animal)
            identified = within and cam_mod.recognition_gate(pixels, cam.model)
            step = cam_mod.CameraStep(
                p.session_id, now, bearing, target, rotate, cam.capture_time, cam.model.latency,
                within, pixels, cam.model.name, identified,
            )
            steps.append(step)
            bearing = target
            done = shot + cam.capture_time + cam.model.latency
            camera_free = done
            q.push(done + sample_latency(setup.downlink, rng), "result", (p, side, step))
            q.push(done, "cameraFree", None)
        elif kind == "cameraFree":
            if pending is not None and now >= camera_free:
                q.push(now, "camera", pending)
                pending = None
        elif kind == "result":
            p, side, step = payload
            if step.identified:
                alert = notifier.emit(AlertKind.CONFIRMED, p.session_id, p.current[:2], side, now, setup.species)
                pipeline.append(alert.emitted_at - p.current.t)
                first = _first_of_three(predictor.history, p)
                if first is not None:
                    end_to_end.append(alert.emitted_at - first)

    readings = list(predictor.history)
    offsets: list[OffsetSample] = []
    for sid in sorted({s for s, _ in readings}):
        fixes = [f for s, f in readings if s == sid]
        offsets.extend(triplet_offsets(fixes, movement_id=script.id))
    return MovementResult(
        script.id,
        detections,
        readings,
        list(predictor.predictions),
        steps,
        list(notifier.log),
        list(gateway.trace),
        offsets,
        average_offset(offsets),
        predictor.stale,
        security.rejected,
        end_to_end,
        pipeline,
        superseded,
    )


def _first_of_three(history: list[tuple[int, Fix]], p: Prediction) -> Optional[float]:
    fixes = [f for s, f in history if s == p.session_id]
    try:
        i = fixes.index(p.current)
    except ValueError:
        return None
    return fixes[i - 2].t if i >= 2 else None


def run_scenario(sc: Scenario) -> SimReport:
    setup = build_setup(sc)
    root = np.random.SeedSequence(sc.seed)
    layout_seqs = root.spawn(len(setup.layouts))
    results = []
    for layout, lseq in zip(setup.layouts, layout_seqs):
        pmap = build_position_map(layout, sc.grid_resolution)
        blind = blind_area_fraction(layout, setup.band, sc.grid_resolution)
        movements = []
        for script, mseq in zip(setup.scripts, lseq.spawn(len(setup.scripts))):
            movements.append(
                run_movement(
                    setup,
                    layout,
                    pmap,
                    script,
                    np.random.default_rng(mseq),
                    sc.motion.sample_step,
                    sc.motion.retrigger,
                    sc.link.slot_duration,
                    sc.link.queue_capacity,
                )
            )
        acc = accuracy_table(
            {m.movement_id: m.avg_offset for m in movements}, setup.camera_distances, setup.camera.hfov
        )
        results.append(LayoutResult(layout, pmap, blind, movements, acc))
    return SimReport(sc.name, sc.seed, results, setup.budget, setup.cost, setup.camera)
