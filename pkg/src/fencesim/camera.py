"""Pan camera: pointing accuracy, step timing, pixel footprint and the CNN pixel gate."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .geometry import FieldSpec, Point, SensorLayout

# published pixel footprint of a 2.0 x 1.5 m animal at 2592x1944
PIXEL_REFERENCE = {
    10: (199, 151),
    20: (99, 76),
    30: (66, 50),
    40: (50, 38),
    50: (40, 30),
    60: (33, 25),
    70: (28, 22),
    80: (25, 19),
}

MIN_PIXELS = {
    "GoogLeNet": 15,
    "SqueezeNet1_1": 17,
    "DenseNet201": 29,
    "VGG16/19": 32,
    "MobileNet": 32,
}

# mean on-device inference time, seconds
MODEL_LATENCY = {
    "VGG16": 2.27,
    "ResNet50": 3.75,
    "ResNet50V2": 3.34,
    "InceptionV3": 4.75,
    "MobileNet": 1.64,
    "MobileNetV2": 2.74,
    "EfficientNetB0": 5.07,
}

RESOLUTION = (2592, 1944)
HFOV = 105.0
ANIMAL_SIZE = (2.0, 1.5)
MAX_DISTANCE = 80.0
OPTIMAL_DISTANCE = 40.0


def fit_vfov(
    table: dict[float, tuple[int, int]] = PIXEL_REFERENCE,
    rows: int = RESOLUTION[1],
    animal_height: float = ANIMAL_SIZE[1],
) -> float:
    """Least-squares vertical FOV (degrees) for the pinhole model ``p = k / distance``."""
    ds = [float(d) for d in table]
    ps = [float(table[d][1]) for d in table]
    k = math.fsum(p / d for p, d in zip(ps, ds)) / math.fsum(1 / (d * d) for d in ds)
    return math.degrees(2.0 * math.atan(rows * animal_height / (2.0 * k)))


VFOV = fit_vfov()


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class RecognitionModel:
    name: str
    latency: float
    min_pixels: int

    @classmethod
    def named(cls, name: str, latency: Optional[float] = None) -> "RecognitionModel":
        if name not in MIN_PIXELS:
            raise KeyError(f"unknown recognition model {name!r}; known: {sorted(MIN_PIXELS)}")
        if latency is None:
            lookup = "VGG16" if name == "VGG16/19" else name
            if lookup not in MODEL_LATENCY:
                raise ValueError(f"no measured latency for {name}; pass one explicitly")
            latency = MODEL_LATENCY[lookup]
        if latency < 0:
            raise ValueError("model latency must be non-negative")
        return cls(name, float(latency), MIN_PIXELS[name])


@dataclass(frozen=True)
class CameraSpec:
    position: Point = (12.5, 12.5)
    hfov: float = HFOV
    vfov: float = VFOV
    resolution: tuple[int, int] = RESOLUTION
    angular_speed: float = 90.0
    capture_time: float = 1.0
    model: RecognitionModel = field(default_factory=lambda: RecognitionModel.named("MobileNet"))

    def __post_init__(self):
        if not (0 < self.hfov < 180 and 0 < self.vfov < 180):
            raise ValueError("fields of view must be in (0, 180) degrees")
        if not (self.resolution[0] > 0 and self.resolution[1] > 0):
            raise ValueError("resolution must be positive")
        if not self.angular_speed > 0:
            raise ValueError("angular_speed must be positive")
        if self.capture_time < 0:
            raise ValueError("capture_time must be non-negative")

    def bearing_to(self, point: Point) -> float:
        return math.atan2(point[1] - self.position[1], point[0] - self.position[0])


@dataclass(frozen=True)
class PointingResult:
    predicted: Point
    actual: Point
    distance: float
    offset: float
    beta: float
    within_fov: bool


def evaluate_pointing(cam: CameraSpec, predicted: Point, actual: Point) -> PointingResult:
    """Conservative hit test: the actual position is taken perpendicular to the camera ray.

    That placement maximises the angle between the ray to the prediction and the
    ray to the animal, so ``beta = atan(offset / D)`` bounds the true angle.
    """
    cx, cy = cam.position
    dist = math.hypot(predicted[0] - cx, predicted[1] - cy)
    if dist == 0:
        raise ValueError("predicted position coincides with the camera")
    offset = math.hypot(actual[0] - predicted[0], actual[1] - predicted[1])
    beta = math.atan(offset / dist)
    return PointingResult(predicted, actual, dist, offset, beta, beta <= math.radians(cam.hfov) / 2 + 1e-12)


def shortest_arc(a: float, b: float) -> float:
    d = (b - a) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def rotation_time(cam: CameraSpec, from_bearing: float, to_bearing: float) -> float:
    return math.degrees(shortest_arc(from_bearing, to_bearing)) / cam.angular_speed


def step_time(cam: CameraSpec, from_bearing: float, to_bearing: float) -> float:
    """Rotate, capture and classify."""
    return rotation_time(cam, from_bearing, to_bearing) + cam.capture_time + cam.model.latency


def pixel_occupancy(cam: CameraSpec, distance: float, animal: tuple[float, float] = ANIMAL_SIZE) -> tuple[int, int]:
    if not distance > 0:
        raise ValueError(f"distance must be positive, got {distance}")
    w, h = animal
    span_w = 2 * distance * math.tan(math.radians(cam.hfov) / 2)
    span_h = 2 * distance * math.tan(math.radians(cam.vfov) / 2)
    return (_round_half_up(cam.resolution[0] * w / span_w), _round_half_up(cam.resolution[1] * h / span_h))


def recognition_gate(pixels: tuple[int, int], model: str | RecognitionModel) -> bool:
    minimum = model.min_pixels if isinstance(model, RecognitionModel) else RecognitionModel.named(model, 0.0).min_pixels
    return min(pixels) >= minimum


def identifiable_models(pixels: tuple[int, int]) -> list[str]:
    return [m for m in MIN_PIXELS if recognition_gate(pixels, m)]


@dataclass(frozen=True)
class PlacementReport:
    max_distance: float
    farthest: Point
    too_far: bool
    optimal: bool

    @property
    def status(self) -> str:
        return "tooFar" if self.too_far else "ok"


def placement_check(
    cam: CameraSpec,
    field_spec: FieldSpec,
    band: float = 0.0,
    sides: Optional[Sequence[str]] = None,
) -> PlacementReport:
    """Farthest point of the watched sensing boundary as seen from the camera.

    The sensing boundary of a side is the side itself pushed outward by
    ``band``; segments are straight so the farthest point is an endpoint.
    """
    if band < 0:
        raise ValueError("band must be non-negative")
    sides = list(sides) if sides else list(field_spec.sides)
    best, far = -1.0, (0.0, 0.0)
    for side in sides:
        length = field_spec.side_length(side)
        # the pushed-out edge runs corner to corner of the square-cornered band
        for along in (-band, length + band):
            p = field_spec.to_field(side, along, band)
            dd = math.hypot(p[0] - cam.position[0], p[1] - cam.position[1])
            if dd > best:
                best, far = dd, p
    return PlacementReport(best, far, best > MAX_DISTANCE, best <= OPTIMAL_DISTANCE)


def placement_check_layout(cam: CameraSpec, layout: SensorLayout, band: float, sides=None) -> PlacementReport:
    return placement_check(cam, layout.field, band, sides)


@dataclass(frozen=True)
class CameraStep:
    session_id: int
    issued_at: float
    bearing_from: float
    bearing_to: float
    rotate: float
    capture: float
    recognize: float
    within_fov: bool
    pixels: tuple[int, int]
    model: str
    identified: bool


def steps_csv(rows: Iterable[tuple[str, CameraStep]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(
        [
            "scope",
            "sessionId",
            "issuedAt",
            "bearingFrom",
            "bearingTo",
            "rotateS",
            "captureS",
            "recognizeS",
            "withinFov",
            "pixelsW",
            "pixelsH",
            "model",
            "identified",
        ]
    )
    for scope, s in rows:
        w.writerow(
            [
                scope,
                s.session_id,
                repr(s.issued_at),
                repr(s.bearing_from),
                repr(s.bearing_to),
                repr(s.rotate),
                repr(s.capture),
                repr(s.recognize),
                int(s.within_fov),
                s.pixels[0],
                s.pixels[1],
                s.model,
                int(s.identified),
            ]
        )
    return buf.getvalue()
