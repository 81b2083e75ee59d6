"""Field frame, PIR sensor layouts and the region map used to turn firing sensors into points.

The field is the rectangle ``[0, width] x [0, height]``.  Sides are labelled
counter-clockwise starting at the bottom edge::

    D side: x = 0        (runs from (0, H) down to (0, 0))
    A side: y = 0        (runs from (0, 0) to (W, 0))
    B side: x = W        (runs from (W, 0) to (W, H))
    C side: y = H        (runs from (W, H) to (0, H))

Every side has a local frame ``(along, depth)`` where ``along`` is measured from
the side's start corner and ``depth`` is positive outward.  For side A this is
simply ``(x, -y)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

Point = tuple[float, float]

SIDES = ("A", "B", "C", "D")
# containment is closed; this absorbs rounding on tangent points
_EPS = 1e-9


@dataclass(frozen=True)
class FieldSpec:
    width: float
    height: float
    sides: tuple[str, ...] = SIDES

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"field dimensions must be positive, got {self.width} x {self.height}")
        if len(self.sides) != 4 or len(set(self.sides)) != 4:
            raise ValueError(f"need 4 distinct side labels, got {self.sides!r}")

    @property
    def corners(self) -> dict[str, Point]:
        """Corner label -> vertex; a corner is named after the two sides meeting there."""
        a, b, c, d = self.sides
        w, h = self.width, self.height
        return {d + a: (0.0, 0.0), a + b: (w, 0.0), b + c: (w, h), c + d: (0.0, h)}

    def side_segment(self, side: str) -> tuple[Point, Point]:
        w, h = self.width, self.height
        segs = {
            self.sides[0]: ((0.0, 0.0), (w, 0.0)),
            self.sides[1]: ((w, 0.0), (w, h)),
            self.sides[2]: ((w, h), (0.0, h)),
            self.sides[3]: ((0.0, h), (0.0, 0.0)),
        }
        return segs[side]

    def side_length(self, side: str) -> float:
        (x0, y0), (x1, y1) = self.side_segment(side)
        return math.hypot(x1 - x0, y1 - y0)

    def outward_normal(self, side: str) -> Point:
        return dict(zip(self.sides, ((0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0))))[side]

    def side_direction(self, side: str) -> Point:
        (x0, y0), (x1, y1) = self.side_segment(side)
        n = math.hypot(x1 - x0, y1 - y0)
        return ((x1 - x0) / n, (y1 - y0) / n)

    def to_field(self, side: str, along: float, depth: float) -> Point:
        (x0, y0), _ = self.side_segment(side)
        ux, uy = self.side_direction(side)
        nx, ny = self.outward_normal(side)
        return (x0 + along * ux + depth * nx, y0 + along * uy + depth * ny)

    def to_side(self, side: str, point: Point) -> Point:
        """Field coordinates -> ``(along, depth)`` in the frame of ``side``."""
        (x0, y0), _ = self.side_segment(side)
        ux, uy = self.side_direction(side)
        nx, ny = self.outward_normal(side)
        dx, dy = point[0] - x0, point[1] - y0
        return (dx * ux + dy * uy, dx * nx + dy * ny)

    def nearest_side(self, point: Point) -> str:
        x, y = point
        dists = (abs(y), abs(x - self.width), abs(y - self.height), abs(x))
        return self.sides[int(np.argmin(dists))]

    def contains(self, x, y):
        return (x >= 0) & (x <= self.width) & (y >= 0) & (y <= self.height)


@dataclass(frozen=True)
class PirSpec:
    """PIR cone: ``max_distance`` is the cone height d, ``base_diameter`` the base h."""

    max_distance: float = 7.0
    base_diameter: float = 5.0

    def __post_init__(self):
        if not (self.max_distance > 0 and self.base_diameter > 0):
            raise ValueError("PIR max_distance and base_diameter must be positive")

    @property
    def cone_angle(self) -> float:
        return 2.0 * math.atan(self.base_diameter / (2.0 * self.max_distance))


class Orientation(str, Enum):
    VERTICAL_DOWN = "vertical-down"
    HORIZONTAL_OUTWARD = "horizontal-outward"


class LayoutKind(str, Enum):
    A = "A"
    B = "B"
    C = "C"


@dataclass(frozen=True)
class SensorPose:
    side: str
    index: int
    position: Point
    mount_height: float
    orientation: Orientation

    @property
    def sensor_id(self) -> str:
        return f"{self.side}{self.index}"


@dataclass(frozen=True)
class CoverageShape:
    """Ground-plane footprint of one sensor: a disk or an isosceles triangle.

    For triangles ``origin`` is the apex, ``direction`` a unit vector from the apex
    to the base midpoint, ``size`` the base width and ``reach`` the height.
    For disks ``origin`` is the centre and ``size`` the diameter.
    """

    kind: str
    origin: Point
    size: float
    reach: float = 0.0
    direction: Point = (0.0, 0.0)

    @classmethod
    def disk(cls, center: Point, diameter: float) -> "CoverageShape":
        return cls("disk", (float(center[0]), float(center[1])), float(diameter))

    @classmethod
    def triangle(cls, apex: Point, direction: Point, base: float, height: float) -> "CoverageShape":
        n = math.hypot(*direction)
        return cls(
            "triangle",
            (float(apex[0]), float(apex[1])),
            float(base),
            float(height),
            (direction[0] / n, direction[1] / n),
        )

    @property
    def radius(self) -> float:
        return self.size / 2.0

    def contains(self, x, y):
        """Closed point-in-shape test; broadcasts over numpy arrays."""
        dx = np.asarray(x, dtype=float) - self.origin[0]
        dy = np.asarray(y, dtype=float) - self.origin[1]
        if self.kind == "disk":
            r = self.radius
            return dx * dx + dy * dy <= r * r + _EPS
        ux, uy = self.direction
        u = dx * ux + dy * uy
        v = -dx * uy + dy * ux
        half = 0.5 * self.size * u / self.reach
        return (u >= -_EPS) & (u <= self.reach + _EPS) & (np.abs(v) <= half + _EPS)

    def centroid(self) -> Point:
        if self.kind == "disk":
            return self.origin
        k = 2.0 * self.reach / 3.0
        return (self.origin[0] + k * self.direction[0], self.origin[1] + k * self.direction[1])

    def bounds(self) -> tuple[float, float, float, float]:
        if self.kind == "disk":
            r = self.radius
            cx, cy = self.origin
            return (cx - r, cy - r, cx + r, cy + r)
        ax, ay = self.origin
        ux, uy = self.direction
        bx, by = ax + self.reach * ux, ay + self.reach * uy
        px, py = -uy * self.size / 2, ux * self.size / 2
        xs = (ax, bx + px, bx - px)
        ys = (ay, by + py, by - py)
        return (min(xs), min(ys), max(xs), max(ys))

    def to_dict(self) -> dict:
        if self.kind == "disk":
            return {"kind": "disk", "center": list(self.origin), "radius": self.radius}
        return {
            "kind": "triangle",
            "apex": list(self.origin),
            "direction": list(self.direction),
            "base": self.size,
            "height": self.reach,
        }


@dataclass(frozen=True)
class Sensor:
    pose: SensorPose
    shape: CoverageShape

    @property
    def sensor_id(self) -> str:
        return self.pose.sensor_id


@dataclass(frozen=True)
class SensorLayout:
    field: FieldSpec
    kind: str
    sensors: tuple[Sensor, ...]
    spacing: float
    rows: int

    def __post_init__(self):
        if not self.sensors:
            raise ValueError("layout has no sensors")
        ids = [s.sensor_id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sensor ids in layout")

    @property
    def sensor_ids(self) -> tuple[str, ...]:
        return tuple(s.sensor_id for s in self.sensors)

    def sensor(self, sensor_id: str) -> Sensor:
        for s in self.sensors:
            if s.sensor_id == sensor_id:
                return s
        raise KeyError(sensor_id)

    def on_side(self, side: str) -> list[Sensor]:
        return [s for s in self.sensors if s.pose.side == side]

    def bounds(self) -> tuple[float, float, float, float]:
        bs = np.array([s.shape.bounds() for s in self.sensors])
        return (bs[:, 0].min(), bs[:, 1].min(), bs[:, 2].max(), bs[:, 3].max())

    def coverage_matrix(self, x, y) -> np.ndarray:
        """Boolean matrix ``(n_points, n_sensors)`` of exact containment."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        return np.stack([s.shape.contains(x, y) for s in self.sensors], axis=1)

    def to_dict(self) -> dict:
        return {
            "field": {"width": self.field.width, "height": self.field.height, "sides": list(self.field.sides)},
            "kind": self.kind,
            "spacing": self.spacing,
            "rows": self.rows,
            "sensors": [
                {
                    "id": s.sensor_id,
                    "side": s.pose.side,
                    "index": s.pose.index,
                    "position": list(s.pose.position),
                    "mount_height": s.pose.mount_height,
                    "orientation": s.pose.orientation.value,
                    "shape": s.shape.to_dict(),
                }
                for s in self.sensors
            ],
        }


DEFAULT_HEIGHTS = {"A": (5.0, 5.0), "B": (1.5,), "C": (5.0, 1.5)}


def build_layout(
    field_spec: FieldSpec,
    pir: PirSpec,
    kind: str,
    spacing: float,
    heights: Sequence[float] | None = None,
    row_gap: float | None = None,
    max_gap: float | None = None,
) -> SensorLayout:
    """Place sensors along every side of the field.

    A: two rows of downward disks, the inner row shifted by ``spacing / 2``
       along the side and the rows ``row_gap`` apart across it (default h/2,
       straddling the boundary).
    B: one row of outward triangles.
    C: one row of disks and one row of triangles at the same positions.

    Each side gets ``floor(length / spacing)`` positions per row starting at its
    start corner, so every corner carries exactly one position.
    """
    kind = LayoutKind(kind).value
    h, d = pir.base_diameter, pir.max_distance
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    if max_gap is None:
        max_gap = 0.5 * h
    if spacing - h > max_gap + _EPS:
        raise ValueError(
            f"spacing {spacing} leaves {spacing - h:.3f} m between adjacent footprints (max_gap {max_gap})"
        )
    heights = tuple(heights) if heights is not None else DEFAULT_HEIGHTS[kind]
    expected_rows = 1 if kind == "B" else 2
    if len(heights) != expected_rows:
        raise ValueError(f"layout {kind} needs {expected_rows} row height(s), got {len(heights)}")
    if any(v < 0 for v in heights):
        raise ValueError("mount heights must be non-negative")
    if row_gap is None:
        row_gap = h / 2.0
    if row_gap < 0:
        raise ValueError("row_gap must be non-negative")

    sensors: list[Sensor] = []
    for side in field_spec.sides:
        length = field_spec.side_length(side)
        n = int(math.floor(length / spacing + 1e-9))
        if n == 0:
            raise ValueError(f"spacing {spacing} exceeds side {side} length {length}")
        if n > 16 and kind != "B" or n > 32:
            raise ValueError(f"side {side} needs {n} sensors per row; frame bitmap holds 32 per side")
        normal = field_spec.outward_normal(side)
        rows: list[tuple[str, float, float, float]] = []  # (shape, along offset, depth, mount height)
        if kind == "A":
            rows = [("disk", 0.0, row_gap / 2, heights[0]), ("disk", spacing / 2, -row_gap / 2, heights[1])]
        elif kind == "B":
            rows = [("triangle", 0.0, 0.0, heights[0])]
        else:
            rows = [("disk", 0.0, 0.0, heights[0]), ("triangle", 0.0, 0.0, heights[1])]
        for r, (shape_kind, offset, depth, mount) in enumerate(rows):
            for i in range(n):
                along = i * spacing + offset
                pos = field_spec.to_field(side, along, depth)
                if shape_kind == "disk":
                    shape = CoverageShape.disk(pos, h)
                    orient = Orientation.VERTICAL_DOWN
                else:
                    shape = CoverageShape.triangle(pos, normal, h, d)
                    orient = Orientation.HORIZONTAL_OUTWARD
                pose = SensorPose(side, r * n + i, _clean(pos), float(mount), orient)
                sensors.append(Sensor(pose, shape))
    return SensorLayout(field_spec, kind, tuple(sensors), float(spacing), 1 if kind == "B" else 2)


def _clean(p: Point) -> Point:
    # 0.0 instead of -0.0 keeps exports stable
    return (p[0] + 0.0, p[1] + 0.0)


def reflect_layout(layout: SensorLayout) -> SensorLayout:
    """Mirror every sensor across the vertical midline ``x = width / 2``."""
    w = layout.field.width

    def mirror(p: Point) -> Point:
        return _clean((w - p[0], p[1]))

    sensors = []
    for s in layout.sensors:
        sh = s.shape
        if sh.kind == "disk":
            shape = CoverageShape.disk(mirror(sh.origin), sh.size)
        else:
            shape = CoverageShape.triangle(mirror(sh.origin), (-sh.direction[0], sh.direction[1]), sh.size, sh.reach)
        pose = SensorPose(s.pose.side, s.pose.index, mirror(s.pose.position), s.pose.mount_height, s.pose.orientation)
        sensors.append(Sensor(pose, shape))
    return SensorLayout(layout.field, layout.kind, tuple(sensors), layout.spacing, layout.rows)


def covering_sensors(layout: SensorLayout, point: Point) -> frozenset[str]:
    """Exact set of sensors whose footprint contains ``point``."""
    x, y = point
    return frozenset(s.sensor_id for s in layout.sensors if bool(s.shape.contains(x, y)))


@dataclass(frozen=True)
class Grid:
    """Cell-centred raster aligned to multiples of ``resolution``."""

    x0: float
    y0: float
    nx: int
    ny: int
    resolution: float

    @classmethod
    def covering(cls, bounds: tuple[float, float, float, float], resolution: float) -> "Grid":
        xmin, ymin, xmax, ymax = bounds
        ix0 = math.floor(xmin / resolution)
        iy0 = math.floor(ymin / resolution)
        ix1 = math.ceil(xmax / resolution)
        iy1 = math.ceil(ymax / resolution)
        return cls(ix0 * resolution, iy0 * resolution, ix1 - ix0, iy1 - iy0, resolution)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.resolution
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.resolution
        return np.meshgrid(xs, ys, indexing="ij")

    def cell_of(self, point: Point) -> tuple[int, int]:
        return (
            int(math.floor((point[0] - self.x0) / self.resolution)),
            int(math.floor((point[1] - self.y0) / self.resolution)),
        )

    def center_of(self, ix: float, iy: float) -> Point:
        return (self.x0 + (ix + 0.5) * self.resolution, self.y0 + (iy + 0.5) * self.resolution)


@dataclass(frozen=True, eq=False)
class CoverageRegion:
    region_id: int
    signature: frozenset[str]
    cells: np.ndarray  # (n, 2) integer grid indices
    representative: Point

    @property
    def size(self) -> int:
        return len(self.cells)


def signature_key(signature: Iterable[str]) -> str:
    return "|".join(sorted(signature, key=_id_sort_key))


def _id_sort_key(sensor_id: str):
    return (sensor_id[:1], int(sensor_id[1:]) if sensor_id[1:].isdigit() else sensor_id[1:])


@dataclass(frozen=True, eq=False)
class PositionMap:
    """Signature -> representative point, plus the raster it was derived from."""

    regions: tuple[CoverageRegion, ...]
    representatives: dict[frozenset, Point]
    fallbacks: dict[frozenset, Point]
    grid: Grid
    labels: np.ndarray  # (nx, ny) region id per cell, -1 where uncovered
    sensor_ids: tuple[str, ...]

    @property
    def resolution(self) -> float:
        return self.grid.resolution

    def __contains__(self, signature) -> bool:
        sig = frozenset(signature)
        return sig in self.representatives or sig in self.fallbacks

    def lookup(self, signature: Iterable[str]) -> Point:
        """Representative for a sensor set.

        Signatures the raster never realised (slivers thinner than a cell) fall
        back to the mean of their members' single-sensor representatives.
        """
        sig = frozenset(signature)
        if not sig:
            raise KeyError("empty signature")
        if sig in self.representatives:
            return self.representatives[sig]
        if sig in self.fallbacks:
            return self.fallbacks[sig]
        pts = [self.lookup([s]) for s in sorted(sig)]
        return (float(np.mean([p[0] for p in pts])), float(np.mean([p[1] for p in pts])))

    def signature_at(self, point: Point) -> frozenset[str]:
        ix, iy = self.grid.cell_of(point)
        if not (0 <= ix < self.grid.nx and 0 <= iy < self.grid.ny):
            return frozenset()
        rid = self.labels[ix, iy]
        return frozenset() if rid < 0 else self.regions[rid].signature

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "regions": [
                {
                    "id": r.region_id,
                    "signature": sorted(r.signature, key=_id_sort_key),
                    "cells": r.size,
                    "representative": list(r.representative),
                }
                for r in self.regions
            ],
            "fallbacks": [
                {"signature": sorted(sig, key=_id_sort_key), "representative": list(p)}
                for sig, p in sorted(self.fallbacks.items(), key=lambda kv: signature_key(kv[0]))
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["regionId", "signature", "x", "y"])
        for r in self.regions:
            w.writerow([r.region_id, signature_key(r.signature), repr(r.representative[0]), repr(r.representative[1])])
        return buf.getvalue()


def build_position_map(layout: SensorLayout, resolution: float = 0.25) -> PositionMap:
    """Rasterise the footprints and split the covered cells into regions.

    Cells are grouped by their covering-sensor signature and 4-connectivity.
    Each region's representative is the centroid of its cells, snapped to the
    nearest member cell when the centroid lands outside the region.
    """
    h = min(s.shape.size for s in layout.sensors)
    if not (resolution > 0 and resolution <= h / 4 + _EPS):
        raise ValueError(f"grid resolution must be in (0, h/4 = {h / 4}], got {resolution}")
    grid = Grid.covering(layout.bounds(), resolution)
    gx, gy = grid.centers()
    cover = layout.coverage_matrix(gx, gy)  # (nx*ny, n_sensors)
    ids = layout.sensor_ids

    covered = cover.any(axis=1)
    packed = np.packbits(cover, axis=1)
    uniq, inverse = np.unique(packed, axis=0, return_inverse=True)
    inverse = inverse.reshape(grid.nx, grid.ny)
    covered = covered.reshape(grid.nx, grid.ny)

    labels = np.full((grid.nx, grid.ny), -1, dtype=np.int64)
    found: list[tuple[tuple, frozenset, np.ndarray]] = []
    for code in range(len(uniq)):
        mask = (inverse == code) & covered
        if not mask.any():
            continue
        bits = np.unpackbits(uniq[code])[: len(ids)].astype(bool)
        sig = frozenset(np.asarray(ids)[bits].tolist())
        comp, n = ndimage.label(mask)
        for c in range(1, n + 1):
            cells = np.argwhere(comp == c)
            found.append(((signature_key(sig), int(cells[0, 0]), int(cells[0, 1])), sig, cells))
    found.sort(key=lambda f: f[0])

    regions = []
    best: dict[frozenset, CoverageRegion] = {}
    for rid, (_, sig, cells) in enumerate(found):
        rep = _representative(grid, cells)
        region = CoverageRegion(rid, sig, cells, rep)
        regions.append(region)
        labels[cells[:, 0], cells[:, 1]] = rid
        if sig not in best or region.size > best[sig].size:
            best[sig] = region

    representatives = {sig: r.representative for sig, r in best.items()}
    fallbacks = {}
    for s in layout.sensors:
        key = frozenset([s.sensor_id])
        if key not in representatives:
            fallbacks[key] = tuple(float(v) for v in s.shape.centroid())
    return PositionMap(tuple(regions), representatives, fallbacks, grid, labels, ids)


def _representative(grid: Grid, cells: np.ndarray) -> Point:
    # integer index means keep symmetric regions exactly on their axis
    mx = cells[:, 0].sum() / len(cells)
    my = cells[:, 1].sum() / len(cells)
    cx, cy = math.floor(mx + 0.5), math.floor(my + 0.5)
    member = np.any((cells[:, 0] == cx) & (cells[:, 1] == cy))
    if not member:
        d2 = (cells[:, 0] - mx) ** 2 + (cells[:, 1] - my) ** 2
        ix, iy = cells[int(np.argmin(d2))]
        mx, my = float(ix), float(iy)
    x, y = grid.center_of(mx, my)
    return (float(x) + 0.0, float(y) + 0.0)


def band_mask(field_spec: FieldSpec, band: float, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Cells of the monitored strip: outside the field, within ``band`` of it (square corners)."""
    inside_outer = (gx >= -band) & (gx <= field_spec.width + band) & (gy >= -band) & (gy <= field_spec.height + band)
    in_field = (gx > 0) & (gx < field_spec.width) & (gy > 0) & (gy < field_spec.height)
    return inside_outer & ~in_field


def blind_area_fraction(layout: SensorLayout, band: float, resolution: float = 0.25) -> float:
    """Fraction of the monitored strip of depth ``band`` that no sensor covers."""
    if not band > 0:
        raise ValueError(f"band must be positive, got {band}")
    f = layout.field
    grid = Grid.covering((-band, -band, f.width + band, f.height + band), resolution)
    gx, gy = grid.centers()
    mask = band_mask(f, band, gx, gy).ravel()
    if not mask.any():
        return 0.0
    covered = layout.coverage_matrix(gx.ravel()[mask], gy.ravel()[mask]).any(axis=1)
    return float(1.0 - covered.mean())
