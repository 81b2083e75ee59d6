"""Fog-side microservices: security gate, session tracking, location prediction, notification."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .geometry import Point, PositionMap
from .link import ReadingMessage

log = logging.getLogger(__name__)

ZERO_MOTION = 1e-6
# timestamps are microsecond-quantised; keeps an exact 0.1 s gap outside the window
_TIME_EPS = 1e-7


class Fix(NamedTuple):
    x: float
    y: float
    t: float


@dataclass(frozen=True)
class PredictorConfig:
    time_threshold: float = 120.0
    time_tolerance: float = 0.1
    latency: float = 5.0

    def __post_init__(self):
        if not self.time_tolerance > 0:
            raise ValueError("time_tolerance must be positive")
        if not self.time_threshold > self.time_tolerance:
            raise ValueError("time_threshold must exceed time_tolerance")
        if not self.latency > 0:
            raise ValueError("latency must be positive")


@dataclass(frozen=True)
class Prediction:
    session_id: int
    previous: Fix
    current: Fix
    speed: float
    heading: float
    lead_distance: float
    predicted: Point
    issued_at: float


def predict(current: Fix, previous: Fix, latency: float, session_id: int = 0, issued_at: float | None = None) -> Prediction:
    """Extrapolate from the last two fixes assuming constant heading and speed for ``latency`` seconds."""
    dt = current.t - previous.t
    if not dt > 0:
        raise ValueError(f"non-positive time step {dt} between fixes")
    dx, dy = current.x - previous.x, current.y - previous.y
    dist = math.sqrt(dx * dx + dy * dy)
    if dist < ZERO_MOTION:
        speed, theta, lead = 0.0, 0.0, 0.0
        target = (current.x, current.y)
    else:
        speed = dist / dt
        theta = math.atan2(dy, dx)
        lead = latency * speed
        target = (current.x + lead * math.cos(theta), current.y + lead * math.sin(theta))
    return Prediction(
        session_id,
        previous,
        current,
        speed,
        theta,
        lead,
        target,
        current.t if issued_at is None else issued_at,
    )


class Outcome(str, Enum):
    NEW_SESSION = "newSession"
    FUSED = "fused"
    ACCEPTED = "accepted"
    STALE = "stale"
    REJECTED = "rejected"


@dataclass(frozen=True)
class Admission:
    outcome: Outcome
    fix: Optional[Fix] = None
    session_id: Optional[int] = None
    # predictions released by closing the previous fusion window
    released: tuple[Prediction, ...] = ()


@dataclass
class _Window:
    opened: float
    members: list[tuple[ReadingMessage, Point]]
    starts_session: bool

    def fix(self) -> Fix:
        # earliest timestamp, centroid of member points; order independent
        xs = sorted(p[0] for _, p in self.members)
        ys = sorted(p[1] for _, p in self.members)
        return Fix(math.fsum(xs) / len(xs), math.fsum(ys) / len(ys), min(m.timestamp for m, _ in self.members))


@dataclass
class SecurityGate:
    """Allow-list of end-node ids; everything else is counted and dropped."""

    allowed: frozenset[str]
    rejected: int = 0

    def admit(self, node: str) -> bool:
        if node in self.allowed:
            return True
        self.rejected += 1
        log.warning("security: rejected frame from unknown node %r", node)
        return False


@dataclass
class Predictor:
    """One instance per field, fed readings in arrival order.

    Readings whose sensing time falls within ``time_tolerance`` of the first
    reading of the open window are fused into one fix.  A window is closed by
    the first later reading or by :meth:`flush`; closing a window commits its
    fix to the session history and, once the session has two fixes, issues a
    prediction from the last two.
    """

    position_map: PositionMap
    config: PredictorConfig = field(default_factory=PredictorConfig)
    history: list[tuple[int, Fix]] = field(default_factory=list)
    predictions: list[Prediction] = field(default_factory=list)
    stale: int = 0
    session_id: int = 0
    _window: Optional[_Window] = None
    _last: Optional[Fix] = None
    _session_fixes: list[Fix] = field(default_factory=list)

    def locate(self, msg: ReadingMessage) -> Point:
        return self.position_map.lookup(msg.sensor_ids)

    @property
    def pending(self) -> bool:
        return self._window is not None

    def admit(self, msg: ReadingMessage, now: float) -> Admission:
        cfg = self.config
        t = msg.timestamp
        point = self.locate(msg)
        w = self._window
        tol = cfg.time_tolerance - _TIME_EPS
        if w is not None and w.opened - tol < t < w.opened + tol:
            w.members.append((msg, point))
            w.opened = min(w.opened, t)
            return Admission(Outcome.FUSED, w.fix(), self.session_id)
        # older than the open window, or a late member of an already closed one
        if w is not None:
            too_old = t <= w.opened - tol
        else:
            too_old = self._last is not None and t < self._last.t + tol
        if too_old:
            self.stale += 1
            log.info("stale reading at t=%.3f", t)
            return Admission(Outcome.STALE)
        released = self._close(now)
        last = self._last
        new_session = last is None or t - last.t > cfg.time_threshold
        self._window = _Window(t, [(msg, point)], new_session)
        fix = Fix(point[0], point[1], t)
        if new_session:
            return Admission(Outcome.NEW_SESSION, fix, self.session_id + 1, released)
        return Admission(Outcome.ACCEPTED, fix, self.session_id, released)

    def flush(self, now: float) -> tuple[Prediction, ...]:
        return self._close(now)

    def _close(self, now: float) -> tuple[Prediction, ...]:
        w = self._window
        if w is None:
            return ()
        self._window = None
        fix = w.fix()
        if w.starts_session:
            self.session_id += 1
            self._session_fixes = []
        self._session_fixes.append(fix)
        self.history.append((self.session_id, fix))
        self._last = fix
        if len(self._session_fixes) < 2:
            return ()
        prev = self._session_fixes[-2]
        p = predict(fix, prev, self.config.latency, self.session_id, issued_at=now)
        self.predictions.append(p)
        return (p,)


class AlertKind(str, Enum):
    POSSIBLE_INVASION = "possibleInvasion"
    CONFIRMED = "confirmed"


@dataclass(frozen=True)
class Alert:
    kind: AlertKind
    session_id: int
    position: Point
    side: str
    species: Optional[str]
    emitted_at: float

    def __post_init__(self):
        if (self.kind is AlertKind.CONFIRMED) != (self.species is not None):
            raise ValueError("confirmed alerts carry a species; possible-invasion alerts do not")


@dataclass
class Notifier:
    """Farmer notification over LTE with a delay drawn uniformly from ``lte_delay``."""

    lte_delay: tuple[float, float] = (0.1, 0.6)
    rng: Optional[np.random.Generator] = None
    log: list[Alert] = field(default_factory=list)

    def __post_init__(self):
        lo, hi = self.lte_delay
        if not 0 <= lo <= hi:
            raise ValueError("LTE delay range must satisfy 0 <= min <= max")

    def emit(
        self,
        kind: AlertKind,
        session_id: int,
        position: Point,
        side: str,
        now: float,
        species: Optional[str] = None,
    ) -> Alert:
        lo, hi = self.lte_delay
        delay = lo if hi == lo or self.rng is None else float(self.rng.uniform(lo, hi))
        alert = Alert(AlertKind(kind), session_id, position, side, species, now + delay)
        self.log.append(alert)
        return alert


def predictions_csv(rows: Iterable[tuple[str, Prediction]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["scope", "sessionId", "tPrev", "tCur", "xCur", "yCur", "speed", "thetaRadians", "xPredict", "yPredict"])
    for scope, p in rows:
        w.writerow(
            [
                scope,
                p.session_id,
                repr(p.previous.t),
                repr(p.current.t),
                repr(p.current.x),
                repr(p.current.y),
                repr(p.speed),
                repr(p.heading),
                repr(p.predicted[0]),
                repr(p.predicted[1]),
            ]
        )
    return buf.getvalue()


def alerts_csv(rows: Iterable[tuple[str, Alert]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["scope", "kind", "sessionId", "emittedAt", "x", "y", "side", "species"])
    for scope, a in rows:
        w.writerow(
            [scope, a.kind.value, a.session_id, repr(a.emitted_at), repr(a.position[0]), repr(a.position[1]), a.side, a.species or ""]
        )
    return buf.getvalue()
