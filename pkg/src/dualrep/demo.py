"""Demonstrations, executed trajectories and their ``.dr`` file format.

A ``.dr`` file is JSON Lines.  The first line is a header object::

    {"format": "dualrep-dr", "version": 1, "kind": "demonstration",
     "sample_rate_hz": 120.0, "registry": "builtin",
     "jigs": ["pipette_plunger", ...], "metadata": {...}}

Every following line is a sample record::

    {"t": 0.5, "p": [x, y, z], "q": [w, x, y, z], "g": 80, "s": ["released", ...]}

with one state name per jig in header order.  Trajectory files append jig
event lines ``{"event": {"t": ..., "jig": ..., "command": ..., "p": [...],
"q": [...]}}`` after the samples.  Numbers are written with 17 significant
digits, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import bisect
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Union

from . import quat
from .errors import FormatError
from .jigs import JigRegistry, JigStateVector, builtin_registry, load_registry

FORMAT = "dualrep-dr"
VERSION = 1
GRIPPER_MAX_MM = 106.0
DEMO_GRIPPER_MAX_MM = 80.0
DEFAULT_SAMPLE_RATE_HZ = 120.0


@dataclass(frozen=True)
class Pose:
    """End-effector position (m) and unit orientation quaternion (w, x, y, z)."""

    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float] = quat.IDENTITY

    def __post_init__(self) -> None:
        p = tuple(float(c) for c in self.position)
        if len(p) != 3 or not all(math.isfinite(c) for c in p):
            raise FormatError(f"position must be 3 finite numbers, got {self.position!r}")
        if len(self.orientation) != 4:
            raise FormatError(f"orientation must have 4 components, got {self.orientation!r}")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", quat.normalize(self.orientation))

    @classmethod
    def trusted(cls, position: tuple, orientation: tuple) -> "Pose":
        """Skip validation for float tuples already known to be finite and unit."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "position", position)
        object.__setattr__(obj, "orientation", orientation)
        return obj


@dataclass(frozen=True)
class GripperState:
    width: float
    """Finger opening in millimeters."""

    def __post_init__(self) -> None:
        w = float(self.width)
        if not (0.0 <= w <= GRIPPER_MAX_MM):
            raise FormatError(f"gripper width {w} outside [0, {GRIPPER_MAX_MM}] mm")
        object.__setattr__(self, "width", w)


@dataclass(frozen=True)
class DemoPoint:
    t: float
    pose: Pose
    gripper: GripperState
    jig_state: JigStateVector


def _check_times(times: Iterable[float], what: str) -> None:
    prev = None
    for i, t in enumerate(times):
        if not math.isfinite(t):
            raise FormatError(f"{what}: non-finite timestamp at index {i}")
        if prev is not None and not t > prev:
            raise FormatError(f"{what}: non-monotone timestamps at index {i} ({prev} -> {t})")
        prev = t


@dataclass(frozen=True)
class Demonstration:
    """Recorded dual demonstration: poses, gripper widths and jig states.

    ``metadata`` is free-form JSON-compatible data.  The key
    ``"relocations"`` (list of ``{"index", "workspace"}``) marks samples where
    the robot changes workspace; replay teleports the plant there.
    """

    points: tuple[DemoPoint, ...]
    registry: JigRegistry = field(default_factory=builtin_registry, compare=False)
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self) -> None:
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise FormatError("demonstration needs N >= 1 points")
        if not self.sample_rate_hz > 0:
            raise FormatError("sample_rate_hz must be > 0")
        if pts[0].t < 0:
            raise FormatError("demonstration timestamps must be non-negative")
        _check_times((p.t for p in pts), "demonstration")
        last = None
        for i, p in enumerate(pts):
            if p.jig_state is not last:
                self.registry.validate(p.jig_state)
                last = p.jig_state
            if p.gripper.width > DEMO_GRIPPER_MAX_MM:
                raise FormatError(
                    f"point {i}: demonstrated gripper width {p.gripper.width} exceeds "
                    f"{DEMO_GRIPPER_MAX_MM} mm"
                )

    def __len__(self) -> int:
        return len(self.points)

    @property
    def times(self) -> list[float]:
        return [p.t for p in self.points]

    @property
    def duration(self) -> float:
        return self.points[-1].t - self.points[0].t

    @property
    def relocations(self) -> list[dict]:
        return list(self.metadata.get("relocations", []))


class TrajectorySample(NamedTuple):
    t: float
    pose: Pose
    gripper: GripperState
    jig_state: JigStateVector


class JigEvent(NamedTuple):
    t: float
    jig: str
    command: str
    pose: Pose
    """End-effector pose when the command was issued."""


@dataclass(frozen=True)
class Trajectory:
    """Executed time series plus the jig commands issued along the way."""

    samples: tuple[TrajectorySample, ...]
    jig_events: tuple[JigEvent, ...] = ()
    registry: JigRegistry = field(default_factory=builtin_registry, compare=False)
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "jig_events", tuple(self.jig_events))
        _check_times((s.t for s in self.samples), "trajectory")
        if self.jig_events:
            if not self.samples:
                raise FormatError("trajectory has jig events but no samples")
            lo, hi = self.samples[0].t, self.samples[-1].t
            for ev in self.jig_events:
                if not lo <= ev.t <= hi:
                    raise FormatError(f"jig event at t={ev.t} outside [{lo}, {hi}]")
                if ev.jig not in self.registry:
                    raise FormatError(f"jig event for unknown jig {ev.jig!r}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        if not self.samples:
            return 0.0
        return self.samples[-1].t - self.samples[0].t


Record = Union[DemoPoint, TrajectorySample]


# -- serialization -------------------------------------------------------


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _vec(v: Sequence[float]) -> str:
    return "[" + ", ".join(_num(c) for c in v) + "]"


def _record_line(r: Record, jigs: Sequence[str]) -> str:
    states = ", ".join(json.dumps(r.jig_state[j]) for j in jigs)
    return (
        f'{{"t": {_num(r.t)}, "p": {_vec(r.pose.position)}, "q": {_vec(r.pose.orientation)}, '
        f'"g": {_num(r.gripper.width)}, "s": [{states}]}}'
    )


def _event_line(ev: JigEvent) -> str:
    return (
        f'{{"event": {{"t": {_num(ev.t)}, "jig": {json.dumps(ev.jig)}, '
        f'"command": {json.dumps(ev.command)}, "p": {_vec(ev.pose.position)}, '
        f'"q": {_vec(ev.pose.orientation)}}}}}'
    )


def _header(kind: str, registry: JigRegistry, sample_rate_hz: Optional[float], metadata) -> str:
    head = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "sample_rate_hz": sample_rate_hz,
        "registry": registry.ref,
        "jigs": list(registry),
        "metadata": dict(metadata),
    }
    return json.dumps(head, sort_keys=True)


def _write(path: Union[str, Path], lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def save_demonstration(demo: Demonstration, path: Union[str, Path]) -> None:
    jigs = list(demo.registry)
    header = _header("demonstration", demo.registry, demo.sample_rate_hz, demo.metadata)
    _write(path, [header, *(_record_line(p, jigs) for p in demo.points)])


def save_trajectory(traj: Trajectory, path: Union[str, Path]) -> None:
    jigs = list(traj.registry)
    header = _header("trajectory", traj.registry, None, traj.metadata)
    _write(
        path,
        [
            header,
            *(_record_line(s, jigs) for s in traj.samples),
            *(_event_line(e) for e in traj.jig_events),
        ],
    )


def _field(obj: dict, key: str, where: str):
    try:
        return obj[key]
    except (KeyError, TypeError):
        raise FormatError(f"{where}: missing field {key!r}") from None


def _floats(value, n: int, where: str, key: str) -> tuple[float, ...]:
    if not isinstance(value, list) or len(value) != n:
        raise FormatError(f"{where}: field {key!r} must be a list of {n} numbers")
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise FormatError(f"{where}: field {key!r} must be numeric") from None
    if not all(math.isfinite(v) for v in out):
        raise FormatError(f"{where}: field {key!r} must be finite")
    return out


def _scalar(value, where: str, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{where}: field {key!r} must be a number")
    return float(value)


def _read(path: Union[str, Path], kind: str, registry: Optional[JigRegistry]):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:1: invalid header: {exc}") from None
    if not isinstance(head, dict) or head.get("format") != FORMAT:
        raise FormatError(f"{path}:1: not a {FORMAT} file")
    if head.get("version") != VERSION:
        raise FormatError(f"{path}:1: unsupported version {head.get('version')!r}")
    if head.get("kind") != kind:
        raise FormatError(f"{path}:1: expected kind {kind!r}, found {head.get('kind')!r}")
    if registry is None:
        registry = load_registry(_field(head, "registry", f"{path}:1"), base=path.parent)
    jigs = _field(head, "jigs", f"{path}:1")
    if not isinstance(jigs, list) or set(jigs) != set(registry) or len(jigs) != len(registry):
        raise FormatError(f"{path}:1: jigs {jigs!r} do not match registry {list(registry)}")
    order = list(registry)

    records: list[tuple] = []
    events: list[JigEvent] = []
    cache: dict[tuple, JigStateVector] = {}
    for lineno, line in enumerate(lines[1:], 2):
        where = f"{path}:{lineno}"
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{where}: {exc}") from None
        if not isinstance(obj, dict):
            raise FormatError(f"{where}: record must be an object")
        try:
            if "event" in obj:
                ev = obj["event"]
                events.append(
                    JigEvent(
                        _scalar(_field(ev, "t", where), where, "t"),
                        str(_field(ev, "jig", where)),
                        str(_field(ev, "command", where)),
                        Pose(
                            _floats(_field(ev, "p", where), 3, where, "p"),
                            _floats(_field(ev, "q", where), 4, where, "q"),
                        ),
                    )
                )
                continue
            t = _scalar(_field(obj, "t", where), where, "t")
            pose = Pose(
                _floats(_field(obj, "p", where), 3, where, "p"),
                _floats(_field(obj, "q", where), 4, where, "q"),
            )
            grip = GripperState(_scalar(_field(obj, "g", where), where, "g"))
            states = _field(obj, "s", where)
            if not isinstance(states, list) or len(states) != len(jigs):
                raise FormatError(f"{where}: field 's' must list {len(jigs)} states")
            key = tuple(states)
            vec = cache.get(key)
            if vec is None:
                vec = JigStateVector(zip(jigs, states))
                vec = JigStateVector((j, vec[j]) for j in order)
                try:
                    registry.validate(vec)
                except FormatError as exc:
                    raise FormatError(f"{where}: field 's': {exc}") from None
                cache[key] = vec
            records.append((t, pose, grip, vec))
        except FormatError as exc:
            if str(exc).startswith(str(path)):
                raise
            raise FormatError(f"{where}: {exc}") from None
    return head, registry, records, events


def load_demonstration(
    path: Union[str, Path], registry: Optional[JigRegistry] = None
) -> Demonstration:
    """Read a ``.dr`` demonstration; the registry defaults to the header reference."""
    head, registry, records, events = _read(path, "demonstration", registry)
    if events:
        raise FormatError(f"{path}: demonstrations cannot contain jig events")
    rate = _scalar(head.get("sample_rate_hz", DEFAULT_SAMPLE_RATE_HZ), f"{path}:1", "sample_rate_hz")
    try:
        return Demonstration(
            tuple(DemoPoint(*r) for r in records),
            registry=registry,
            sample_rate_hz=rate,
            metadata=head.get("metadata") or {},
        )
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def load_trajectory(path: Union[str, Path], registry: Optional[JigRegistry] = None) -> Trajectory:
    head, registry, records, events = _read(path, "trajectory", registry)
    try:
        return Trajectory(
            tuple(TrajectorySample(*r) for r in records),
            tuple(events),
            registry=registry,
            metadata=head.get("metadata") or {},
        )
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


# -- resampling ----------------------------------------------------------


def _lerp(a: float, b: float, u: float) -> float:
    return a + (b - a) * u


def interpolate(demo: Demonstration, t: float) -> DemoPoint:
    """Demonstration state at time ``t`` (clamped to the recorded span).

    Position and gripper are linear, orientation is slerp, jig state is the
    latest recorded state at or before ``t``.
    """
    pts = demo.points
    times = demo.times
    k = bisect.bisect_right(times, t) - 1
    if k < 0:
        return pts[0]
    if k >= len(pts) - 1 or times[k] == t:
        p = pts[min(k, len(pts) - 1)]
        return p if p.t == t else DemoPoint(t, p.pose, p.gripper, p.jig_state)
    a, b = pts[k], pts[k + 1]
    u = (t - a.t) / (b.t - a.t)
    pos = tuple(_lerp(a.pose.position[i], b.pose.position[i], u) for i in range(3))
    q = quat.slerp(a.pose.orientation, b.pose.orientation, u)
    g = _lerp(a.gripper.width, b.gripper.width, u)
    return DemoPoint(t, Pose(pos, q), GripperState(g), a.jig_state)


def resample(demo: Demonstration, rate_hz: float) -> Demonstration:
    """Resample onto a uniform grid ``t0 + k / rate_hz`` covering the demo.

    The last recorded point is always kept, even when the duration is not a
    whole number of periods.
    """
    if not rate_hz > 0:
        raise ValueError(f"rate_hz must be > 0, got {rate_hz}")
    t0, t1 = demo.points[0].t, demo.points[-1].t
    n = int(math.floor((t1 - t0) * rate_hz + 1e-9))
    grid = [t0 + k / rate_hz for k in range(n + 1)]
    if abs(grid[-1] - t1) <= 1e-9 * max(1.0, abs(t1)):
        grid[-1] = t1
    else:
        grid.append(t1)
    points = [interpolate(demo, t) for t in grid]
    meta = dict(demo.metadata)
    if demo.relocations:
        times = demo.times
        meta["relocations"] = [
            {**r, "index": bisect.bisect_left(grid, times[r["index"]])} for r in demo.relocations
        ]
    return Demonstration(tuple(points), demo.registry, float(rate_hz), meta)


def time_scaled(demo: Demonstration, factor: float) -> Demonstration:
    """Copy of ``demo`` with every timestamp multiplied by ``factor``."""
    if not factor > 0:
        raise ValueError("factor must be > 0")
    pts = tuple(DemoPoint(p.t * factor, p.pose, p.gripper, p.jig_state) for p in demo.points)
    return Demonstration(pts, demo.registry, demo.sample_rate_hz / factor, dict(demo.metadata))
