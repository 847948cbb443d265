"""Waypoint scripts (``.scn``) that stand in for a human demonstrator.

Grammar, one directive per line, ``#`` starts a comment::

    scenario <name>
    description <free text>
    registry builtin | <path/to/jigs.dsl>
    rate <hz>                                 # demonstration sample rate
    trials <k>                                # default trial count
    workspace <id>                            # workspace of the start pose
    start pos X Y Z [rot AX AY AZ DEG | quat W X Y Z] grip W
    expect <jig>=<state> [<jig>=<state> ...]  # required final jig states
    set controller.<field> <value>            # config overrides
    set plant.<field> <value>

    move <seconds> (pos X Y Z | by DX DY DZ) [rot ... | quat ... | turn AX AY AZ DEG] [grip W]
    dwell <seconds>
    jig <jig-id> <command>
    relocate <workspace> pos X Y Z [rot ... | quat ...]

Positions are meters in the current workspace frame, angles in degrees,
gripper widths in millimeters.  ``by`` and ``turn`` are relative to the
pose at the end of the previous event (``turn`` rotates in the world frame).
Unspecified orientation or gripper width carry over.
"""

from __future__ import annotations

import math
import re
import shlex
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from . import quat
from .demo import DEFAULT_SAMPLE_RATE_HZ, DemoPoint, Demonstration, GripperState, Pose
from .errors import FormatError
from .jigs import JigRegistry, JigRuntime, JigStateVector, load_registry, step, tick


@dataclass(frozen=True)
class MoveTo:
    duration_s: float
    pose: Pose
    gripper: GripperState


@dataclass(frozen=True)
class Dwell:
    duration_s: float


@dataclass(frozen=True)
class JigCmd:
    jig: str
    command: str


@dataclass(frozen=True)
class Relocate:
    workspace: str
    pose: Pose


Event = Union[MoveTo, Dwell, JigCmd, Relocate]


@dataclass(frozen=True)
class WaypointScript:
    registry: JigRegistry
    sample_rate_hz: float
    start_pose: Pose
    start_gripper: GripperState
    events: tuple[Event, ...]
    start_workspace: str = "ws1"
    start_jigs: Optional[JigStateVector] = None

    def __post_init__(self) -> None:
        if not self.sample_rate_hz > 0:
            raise FormatError("sample rate must be > 0")
        for ev in self.events:
            if isinstance(ev, (MoveTo, Dwell)) and not ev.duration_s > 0:
                raise FormatError(f"duration must be > 0 in {ev}")
            if isinstance(ev, JigCmd):
                if ev.jig not in self.registry:
                    raise FormatError(f"unknown jig {ev.jig!r}")
                if ev.command not in self.registry[ev.jig].commands:
                    raise FormatError(f"jig {ev.jig!r} has no command {ev.command!r}")

    @property
    def duration(self) -> float:
        return sum(ev.duration_s for ev in self.events if isinstance(ev, (MoveTo, Dwell)))


@dataclass(frozen=True)
class Scenario:
    name: str
    script: WaypointScript
    expected_final: dict = field(default_factory=dict)
    trials: int = 10
    overrides: dict = field(default_factory=dict)
    """{"controller": {...}, "plant": {...}}"""
    description: str = ""


# -- parsing -------------------------------------------------------------

_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_CONTROLLER_FIELDS = {"alpha", "epsilon", "loop_rate_hz", "epsilon_orientation",
                      "epsilon_gripper", "timeout_s"}
_PLANT_FIELDS = {"dt", "v_max", "w_max", "g_max", "command_latency_ticks", "noise_stddev_pos",
                 "noise_stddev_gripper", "jig_actuation_delay_s", "seed"}


class _Tokens:
    def __init__(self, words: list[str], lineno: int):
        self.words = words
        self.pos = 0
        self.lineno = lineno

    def error(self, msg: str) -> FormatError:
        return FormatError(f"line {self.lineno}: {msg}")

    def more(self) -> bool:
        return self.pos < len(self.words)

    def peek(self) -> Optional[str]:
        return self.words[self.pos] if self.more() else None

    def word(self) -> str:
        if not self.more():
            raise self.error("unexpected end of line")
        w = self.words[self.pos]
        self.pos += 1
        return w

    def number(self) -> float:
        w = self.word()
        if not re.fullmatch(_FLOAT, w):
            raise self.error(f"expected a number, got {w!r}")
        return float(w)

    def numbers(self, n: int) -> tuple[float, ...]:
        return tuple(self.number() for _ in range(n))

    def done(self) -> None:
        if self.more():
            raise self.error(f"unexpected {' '.join(self.words[self.pos:])!r}")


def _orientation(tok: _Tokens, current: quat.Quat) -> quat.Quat:
    kw = tok.peek()
    if kw == "rot":
        tok.word()
        ax = tok.numbers(3)
        return quat.from_axis_angle(ax, math.radians(tok.number()))
    if kw == "quat":
        tok.word()
        return quat.normalize(tok.numbers(4))
    if kw == "turn":
        tok.word()
        ax = tok.numbers(3)
        r = quat.from_axis_angle(ax, math.radians(tok.number()))
        return quat.normalize(quat.mul(r, current))
    return current


def parse_scenario(text: str, base: Optional[Path] = None, name: Optional[str] = None) -> Scenario:
    """Parse a ``.scn`` script; relative registry paths resolve against ``base``."""
    header: dict = {"registry": "builtin", "rate": DEFAULT_SAMPLE_RATE_HZ, "trials": 10,
                    "workspace": "ws1", "expect": {}, "set": {"controller": {}, "plant": {}},
                    "description": "", "name": name}
    pose: Optional[Pose] = None
    start: Optional[tuple[Pose, float]] = None
    grip: Optional[float] = None
    events: list[Event] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            words = shlex.split(line)
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        tok = _Tokens(words, lineno)
        kw = tok.word()
        if kw == "scenario":
            header["name"] = tok.word()
            tok.done()
        elif kw == "description":
            header["description"] = line.split(None, 1)[1] if len(words) > 1 else ""
        elif kw == "registry":
            header["registry"] = tok.word()
            tok.done()
        elif kw == "rate":
            header["rate"] = tok.number()
            tok.done()
        elif kw == "trials":
            k = tok.number()
            if k != int(k) or k < 1:
                raise tok.error("trials must be a positive integer")
            header["trials"] = int(k)
            tok.done()
        elif kw == "workspace":
            header["workspace"] = tok.word()
            tok.done()
        elif kw == "expect":
            while tok.more():
                item = tok.word()
                if "=" not in item:
                    raise tok.error(f"expected jig=state, got {item!r}")
                jig, state = item.split("=", 1)
                header["expect"][jig] = state
        elif kw == "set":
            key = tok.word()
            section, _, fname = key.partition(".")
            allowed = {"controller": _CONTROLLER_FIELDS, "plant": _PLANT_FIELDS}.get(section)
            if allowed is None or fname not in allowed:
                raise tok.error(f"unknown setting {key!r}")
            header["set"][section][fname] = tok.number()
            tok.done()
        elif kw == "start":
            if tok.word() != "pos":
                raise tok.error("start needs 'pos X Y Z'")
            p = tok.numbers(3)
            q = _orientation(tok, quat.IDENTITY)
            if tok.word() != "grip":
                raise tok.error("start needs 'grip W'")
            grip = tok.number()
            tok.done()
            pose = Pose(p, q)
            start = (pose, grip)
        elif kw in ("move", "dwell", "jig", "relocate"):
            if pose is None or grip is None:
                raise tok.error(f"{kw!r} before 'start'")
            if kw == "move":
                d = tok.number()
                mode = tok.word()
                if mode == "pos":
                    p = tok.numbers(3)
                elif mode == "by":
                    dp = tok.numbers(3)
                    p = tuple(a + b for a, b in zip(pose.position, dp))
                else:
                    raise tok.error("move needs 'pos X Y Z' or 'by DX DY DZ'")
                q = _orientation(tok, pose.orientation)
                if tok.peek() == "grip":
                    tok.word()
                    grip = tok.number()
                tok.done()
                pose = Pose(p, q)
                events.append(MoveTo(d, pose, GripperState(grip)))
            elif kw == "dwell":
                events.append(Dwell(tok.number()))
                tok.done()
            elif kw == "jig":
                events.append(JigCmd(tok.word(), tok.word()))
                tok.done()
            else:
                ws = tok.word()
                if tok.word() != "pos":
                    raise tok.error("relocate needs 'pos X Y Z'")
                p = tok.numbers(3)
                q = _orientation(tok, pose.orientation)
                tok.done()
                pose = Pose(p, q)
                events.append(Relocate(ws, pose))
        else:
            raise tok.error(f"unknown directive {kw!r}")
    if header["name"] is None:
        raise FormatError("missing 'scenario <name>' line")
    if start is None:
        raise FormatError("missing 'start' line")
    registry = load_registry(header["registry"], base=base)
    script = WaypointScript(
        registry=registry,
        sample_rate_hz=header["rate"],
        start_pose=start[0],
        start_gripper=GripperState(start[1]),
        events=tuple(events),
        start_workspace=header["workspace"],
    )
    for jig, state in header["expect"].items():
        if jig not in registry or state not in registry[jig].states:
            raise FormatError(f"expect: unknown jig state {jig}={state}")
    return Scenario(
        name=header["name"],
        script=script,
        expected_final=dict(header["expect"]),
        trials=header["trials"],
        overrides={k: dict(v) for k, v in header["set"].items() if v},
        description=header["description"],
    )


def load_scenario(name_or_path: Union[str, Path]) -> Scenario:
    """Load a builtin scenario by name or a ``.scn`` file by path."""
    key = str(name_or_path)
    if key in BUILTIN_SCENARIOS:
        text = resources.files("dualrep").joinpath(f"data/{key}.scn").read_text()
        return parse_scenario(text, name=key)
    path = Path(name_or_path)
    if not path.exists():
        raise FormatError(
            f"unknown scenario {key!r}; builtins: {', '.join(BUILTIN_SCENARIOS)}"
        )
    return parse_scenario(path.read_text(), base=path.parent, name=path.stem)


BUILTIN_SCENARIOS = ("bottle", "pipetting", "polymer-e2e")


# -- synthesis -----------------------------------------------------------


@dataclass
class _Piece:
    t0: float
    t1: float
    pose0: Pose
    pose1: Pose
    grip0: float
    grip1: float

    def at(self, t: float) -> tuple[Pose, float]:
        if t >= self.t1 or self.t1 == self.t0:
            return self.pose1, self.grip1
        if t <= self.t0:
            return self.pose0, self.grip0
        u = (t - self.t0) / (self.t1 - self.t0)
        a, b = self.pose0, self.pose1
        if a == b:
            pose = a
        else:
            p = tuple(a.position[i] + (b.position[i] - a.position[i]) * u for i in range(3))
            pose = Pose(p, quat.slerp(a.orientation, b.orientation, u))
        return pose, self.grip0 + (self.grip1 - self.grip0) * u


def synthesize(script: WaypointScript, metadata: Optional[dict] = None) -> Demonstration:
    """Sample a script into a demonstration at ``script.sample_rate_hz``.

    Samples sit at ``k / rate`` (plus the final instant when the script
    length is not a whole number of periods).  Instantaneous events at time
    tau (jig commands, relocations) affect every sample with ``t >= tau``.
    Jig timers run on the demonstration clock.
    """
    reg = script.registry
    pieces: list[_Piece] = []
    jig_events: list[tuple[float, str, str]] = []
    relocations: list[tuple[float, str]] = []
    t = 0.0
    pose, grip = script.start_pose, script.start_gripper.width
    pieces.append(_Piece(0.0, 0.0, pose, pose, grip, grip))
    for ev in script.events:
        if isinstance(ev, MoveTo):
            pieces.append(_Piece(t, t + ev.duration_s, pose, ev.pose, grip, ev.gripper.width))
            t += ev.duration_s
            pose, grip = ev.pose, ev.gripper.width
        elif isinstance(ev, Dwell):
            pieces.append(_Piece(t, t + ev.duration_s, pose, pose, grip, grip))
            t += ev.duration_s
        elif isinstance(ev, JigCmd):
            jig_events.append((t, ev.jig, ev.command))
        elif isinstance(ev, Relocate):
            pose = ev.pose
            pieces.append(_Piece(t, t, pose, pose, grip, grip))
            relocations.append((t, ev.workspace))
    total = t
    rate = script.sample_rate_hz
    n = int(math.floor(total * rate + 1e-9))
    grid = [k / rate for k in range(n + 1)]
    if total - grid[-1] > 1e-9:
        grid.append(total)

    start_states = script.start_jigs or reg.initial_states()
    runtimes = {j: JigRuntime.start(reg[j], start_states[j], 0.0) for j in reg}
    points: list[DemoPoint] = []
    reloc_meta: list[dict] = []
    segments = [{"workspace": script.start_workspace, "index": 0}]
    pi = 0
    ei = 0
    ri = 0
    vec: Optional[JigStateVector] = None
    for k, ts in enumerate(grid):
        while pi + 1 < len(pieces) and pieces[pi + 1].t0 <= ts:
            pi += 1
        while ei < len(jig_events) and jig_events[ei][0] <= ts:
            tau, jig, cmd = jig_events[ei]
            for j in runtimes:
                runtimes[j] = tick(runtimes[j], tau)
            rt = runtimes[jig]
            new = step(rt, cmd, tau)
            if new is rt:
                warnings.warn(
                    f"jig command {jig}.{cmd} at t={tau:g} s has no effect in state {rt.current!r}",
                    stacklevel=2,
                )
            runtimes[jig] = new
            ei += 1
        while ri < len(relocations) and relocations[ri][0] <= ts:
            reloc_meta.append({"index": k, "workspace": relocations[ri][1]})
            segments.append({"workspace": relocations[ri][1], "index": k})
            ri += 1
        for j in runtimes:
            runtimes[j] = tick(runtimes[j], ts)
        states = JigStateVector((j, runtimes[j].current) for j in reg)
        if vec is None or states != vec:
            vec = states
        p, g = pieces[pi].at(ts)
        points.append(DemoPoint(ts, p, GripperState(g), vec))
    meta = dict(metadata or {})
    if reloc_meta:
        meta["relocations"] = reloc_meta
    if len(segments) > 1:
        meta["segments"] = segments
    return Demonstration(tuple(points), reg, rate, meta)
