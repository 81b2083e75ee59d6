"""LoRa-like uplink: 16-byte reading frames, measured latency profiles, round-robin gateway."""

from __future__ import annotations

import csv
import io
import logging
import math
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

log = logging.getLogger(__name__)

FRAME_SIZE = 16
# side, sensor bitmap, timestamp in microseconds, sequence number; checksum appended
_BODY = struct.Struct("<BIQH")
SIDE_CODES = {"A": 0x41, "B": 0x42, "C": 0x43, "D": 0x44}
_SIDE_BY_CODE = {v: k for k, v in SIDE_CODES.items()}


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class ReadingMessage:
    """One ``#side-#sensor-timestamp`` report.

    ``sensors`` holds per-side sensor indices; the frame carries them as a bitmap,
    so an overlap report is a single frame with several bits set.
    """

    side: str
    sensors: frozenset[int]
    timestamp: float
    seq: int = 0

    @property
    def sensor(self) -> int:
        if len(self.sensors) != 1:
            raise ValueError(f"message carries {len(self.sensors)} sensors")
        return next(iter(self.sensors))

    @property
    def sensor_ids(self) -> frozenset[str]:
        return frozenset(f"{self.side}{i}" for i in self.sensors)

    def encode(self) -> bytes:
        return encode_frame(self.side, self.sensors, self.timestamp, self.seq)


def _as_indices(sensor_field) -> frozenset[int]:
    if isinstance(sensor_field, (int, np.integer)):
        return frozenset([int(sensor_field)])
    return frozenset(int(i) for i in sensor_field)


def encode_frame(side: str, sensor_field, timestamp: float, seq: int = 0) -> bytes:
    if side not in SIDE_CODES:
        raise FrameError(f"unknown side {side!r}")
    indices = _as_indices(sensor_field)
    if not indices:
        raise FrameError("empty sensor field")
    if min(indices) < 0 or max(indices) > 31:
        raise FrameError(f"sensor indices must be in 0..31, got {sorted(indices)}")
    if not (timestamp >= 0 and math.isfinite(timestamp)):
        raise FrameError(f"timestamp must be finite and >= 0, got {timestamp}")
    micros = int(round(timestamp * 1_000_000))
    if micros >= 1 << 64:
        raise FrameError("timestamp overflows 64-bit microseconds")
    bitmap = 0
    for i in indices:
        bitmap |= 1 << i
    body = _BODY.pack(SIDE_CODES[side], bitmap, micros, seq & 0xFFFF)
    return body + bytes([sum(body) & 0xFF])


def decode_frame(frame: bytes) -> ReadingMessage:
    if len(frame) != FRAME_SIZE:
        raise FrameError(f"frame must be {FRAME_SIZE} bytes, got {len(frame)}")
    body, check = frame[:-1], frame[-1]
    if sum(body) & 0xFF != check:
        raise FrameError("checksum mismatch")
    code, bitmap, micros, seq = _BODY.unpack(body)
    if code not in _SIDE_BY_CODE:
        raise FrameError(f"unknown side code 0x{code:02x}")
    if bitmap == 0:
        raise FrameError("empty sensor bitmap")
    sensors = frozenset(i for i in range(32) if bitmap >> i & 1)
    return ReadingMessage(_SIDE_BY_CODE[code], sensors, micros / 1_000_000, seq)


@dataclass(frozen=True)
class LinkProfile:
    sender_height_ft: float
    receiver_height_ft: float
    distance_m: float
    base_latency: float
    jitter: float = 0.1

    def __post_init__(self):
        if not self.base_latency > 0:
            raise ValueError("base_latency must be positive")
        if not 0 <= self.jitter <= 0.5:
            raise ValueError("jitter fraction must be in [0, 0.5]")

    def with_jitter(self, jitter: float) -> "LinkProfile":
        return LinkProfile(self.sender_height_ft, self.receiver_height_ft, self.distance_m, self.base_latency, jitter)

    def with_base(self, base_latency: float) -> "LinkProfile":
        return LinkProfile(self.sender_height_ft, self.receiver_height_ft, self.distance_m, base_latency, self.jitter)

    @property
    def bounds(self) -> tuple[float, float]:
        return (self.base_latency * (1 - self.jitter), self.base_latency * (1 + self.jitter))


# measured 16-byte delivery latency for (sender ft, receiver ft, distance m)
LINK_PROFILES = {
    "s4-r4-500m": LinkProfile(4, 4, 500, 4.0),
    "s4-r35-350m": LinkProfile(4, 35, 350, 0.7),
    "s35-r200-500m": LinkProfile(35, 200, 500, 1.1),
    "s4-r200-2000m": LinkProfile(4, 200, 2000, 0.9),
}


def profile(name: str, jitter: float = 0.1) -> LinkProfile:
    try:
        return LINK_PROFILES[name].with_jitter(jitter)
    except KeyError:
        raise KeyError(f"unknown link profile {name!r}; known: {sorted(LINK_PROFILES)}") from None


def sample_latency(p: LinkProfile, rng: np.random.Generator) -> float:
    u = rng.uniform(-p.jitter, p.jitter)
    return p.base_latency * (1.0 + u)


@dataclass
class Delivery:
    node: str
    enqueued: float
    slot_start: float | None
    arrival: float | None
    nbytes: int
    message: object = None

    @property
    def dropped(self) -> bool:
        return self.arrival is None


@dataclass
class Gateway:
    """Fog-side gateway polling its end nodes one slot each, in a fixed cycle.

    Slot ``k`` spans ``[k * slot, (k + 1) * slot)`` and belongs to
    ``nodes[k % len(nodes)]``.  A node sends at most one frame per owned slot,
    in enqueue order.  ``capacity`` bounds the frames a node may have waiting.
    """

    nodes: tuple[str, ...]
    slot: float = 1.0
    capacity: int = 16
    trace: list[Delivery] = field(default_factory=list)
    _next_slot: dict[str, int] = field(default_factory=dict)
    _waiting: dict[str, deque] = field(default_factory=dict)
    _last_arrival: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = tuple(self.nodes)
        if not self.nodes or len(set(self.nodes)) != len(self.nodes):
            raise ValueError("gateway needs distinct end node ids")
        if not self.slot > 0:
            raise ValueError("slot duration must be positive")
        if self.capacity < 1:
            raise ValueError("queue capacity must be >= 1")

    @property
    def cycle(self) -> float:
        return self.slot * len(self.nodes)

    def owner(self, slot_index: int) -> str:
        return self.nodes[slot_index % len(self.nodes)]

    def next_owned_slot(self, node: str, now: float) -> int:
        """Index of the first slot of ``node`` starting at or after ``now``."""
        n = len(self.nodes)
        pos = self.nodes.index(node)
        k = math.ceil(now / self.slot - 1e-9)
        k += (pos - k) % n
        return k

    def deliver(self, node: str, message, link: LinkProfile, now: float, rng: np.random.Generator) -> Delivery:
        if node not in self.nodes:
            raise KeyError(f"unknown end node {node!r}")
        waiting = self._waiting.setdefault(node, deque())
        while waiting and waiting[0] <= now:
            waiting.popleft()
        nbytes = FRAME_SIZE
        if len(waiting) >= self.capacity:
            d = Delivery(node, now, None, None, nbytes, message)
            self.trace.append(d)
            log.info("drop: node %s queue full at t=%.3f", node, now)
            return d
        k = max(self.next_owned_slot(node, now), self._next_slot.get(node, 0))
        start = k * self.slot
        self._next_slot[node] = k + len(self.nodes)
        waiting.append(start)
        arrival = start + sample_latency(link, rng)
        # in-order delivery per node even when jitter exceeds the slot spacing
        arrival = max(arrival, self._last_arrival.get(node, -math.inf))
        self._last_arrival[node] = arrival
        d = Delivery(node, now, start, arrival, nbytes, message)
        self.trace.append(d)
        return d


def trace_csv(rows: Iterable[tuple[str, Delivery]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["scope", "nodeId", "enqueueT", "slotStartT", "arrivalT", "bytes", "dropped"])
    for scope, d in rows:
        w.writerow(
            [
                scope,
                d.node,
                repr(d.enqueued),
                "" if d.slot_start is None else repr(d.slot_start),
                "" if d.arrival is None else repr(d.arrival),
                d.nbytes,
                int(d.dropped),
            ]
        )
    return buf.getvalue()
