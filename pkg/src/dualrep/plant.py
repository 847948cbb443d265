"""Deterministic kinematic stand-in for the manipulator, gripper, tracker and jigs.

Noise generator
---------------
Observation noise comes from :class:`CounterRNG`, a counter-based generator
whose output is fixed bit-for-bit by the following recipe (all arithmetic
mod 2**64)::

    mix(z):  z = (z ^ z >> 30) * 0xBF58476D1CE4E5B9
             z = (z ^ z >> 27) * 0x94D049BB133111EB
             return z ^ z >> 31
    key      = mix(seed) for stream 0, mix(key ^ mix(stream)) for split(stream)
    word(k)  = mix(key + (k + 1) * 0x9E3779B97F4A7C15)
    unit(k)  = ((word(k) >> 11) + 0.5) * 2**-53          # in (0, 1)

Normals are drawn in Box-Muller pairs from two consecutive unit draws u1,
u2: ``r = sqrt(-2 ln u1)``, giving ``r cos(2 pi u2)`` then
``r sin(2 pi u2)``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from . import quat
from .controller import ControlCommand
from .demo import GRIPPER_MAX_MM, GripperState, Pose, TrajectorySample
from .jigs import JigRegistry, JigRuntime, JigStateVector, step, tick

_M64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


class CounterRNG:
    """Splittable counter-based generator (SplitMix64 finalizer, Box-Muller normals)."""

    def __init__(self, seed: int = 0, *, _key: Optional[int] = None, counter: int = 0):
        self.key = _mix64(seed) if _key is None else _key
        self.counter = counter
        self._spare: Optional[float] = None

    def split(self, stream: int) -> "CounterRNG":
        return CounterRNG(_key=_mix64(self.key ^ _mix64(stream)))

    def next_u64(self) -> int:
        self.counter += 1
        return _mix64(self.key + self.counter * _GAMMA)

    def uniform(self) -> float:
        return ((self.next_u64() >> 11) + 0.5) * 2.0 ** -53

    def normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1, u2 = self.uniform(), self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def state(self) -> tuple[int, int, Optional[float]]:
        return self.key, self.counter, self._spare


@dataclass(frozen=True)
class PlantConfig:
    dt: float = 1.0 / 20.0
    v_max: float = 0.25
    """Linear speed limit (m/s)."""
    w_max: float = 1.0
    """Angular speed limit (rad/s)."""
    g_max: float = 50.0
    """Gripper speed limit (mm/s)."""
    command_latency_ticks: int = 0
    noise_stddev_pos: float = 0.0
    noise_stddev_gripper: float = 0.0
    jig_actuation_delay_s: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        # zero saturation is allowed: it models a plant that cannot move
        for name in ("v_max", "w_max", "g_max", "noise_stddev_pos",
                     "noise_stddev_gripper", "jig_actuation_delay_s"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"PlantConfig.{name} must be finite and >= 0, got {v}")
        if int(self.command_latency_ticks) != self.command_latency_ticks or self.command_latency_ticks < 0:
            raise ValueError("command_latency_ticks must be an integer >= 0")


@dataclass(frozen=True)
class PlantState:
    """Immutable snapshot of the plant."""

    true_pose: Pose
    true_gripper: GripperState
    jig_runtimes: dict = field(compare=False)
    pending: tuple
    sim_time: float
    rng_state: tuple


def _saturate(v: tuple[float, float, float], limit: float) -> tuple[float, float, float]:
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if n <= limit:
        return v
    k = limit / n
    return (v[0] * k, v[1] * k, v[2] * k)


class PlantSim:
    """Velocity-driven end-effector with explicit Euler integration.

    Single-owner and mutable: :meth:`apply_command` advances the plant by one
    ``dt``; :attr:`state` returns an immutable snapshot.
    """

    def __init__(
        self,
        cfg: PlantConfig,
        start_pose: Pose,
        start_gripper: GripperState,
        jig_states: JigStateVector,
        registry: JigRegistry,
        rng: Optional[CounterRNG] = None,
    ):
        self.cfg = cfg
        self.registry = registry
        registry.validate(jig_states)
        self._pos = start_pose.position
        self._q = start_pose.orientation
        self._grip = start_gripper.width
        self._ticks = 0
        self._jigs: dict[str, JigRuntime] = {
            j: JigRuntime.start(registry[j], jig_states[j], 0.0) for j in registry
        }
        self._jig_vec: Optional[JigStateVector] = None
        self._latency: deque[ControlCommand] = deque()
        self._pending: list[tuple[int, int, str, str]] = []
        self._seq = 0
        self._delay_ticks = int(math.ceil(cfg.jig_actuation_delay_s / cfg.dt - 1e-9))
        self.rng = rng if rng is not None else CounterRNG(cfg.seed)
        self.transitions: list[tuple[float, str, str, str]] = []
        """(time, jig, from, to) for every jig state change, commands and timers alike."""

    @classmethod
    def for_demo(cls, demo, cfg: PlantConfig, rng: Optional[CounterRNG] = None) -> "PlantSim":
        p0 = demo.points[0]
        return cls(cfg, p0.pose, p0.gripper, p0.jig_state, demo.registry, rng)

    @property
    def sim_time(self) -> float:
        return self._ticks * self.cfg.dt

    def substeps_for(self, period: float) -> int:
        k = int(round(period / self.cfg.dt))
        if k < 1 or abs(k * self.cfg.dt - period) > 1e-9 * period:
            raise ValueError(
                f"control period {period} is not a whole multiple of plant dt {self.cfg.dt}"
            )
        return k

    def jig_states(self) -> JigStateVector:
        if self._jig_vec is None:
            self._jig_vec = JigStateVector((j, rt.current) for j, rt in self._jigs.items())
        return self._jig_vec

    @property
    def state(self) -> PlantState:
        return PlantState(
            Pose(self._pos, self._q),
            GripperState(self._grip),
            dict(self._jigs),
            tuple(self._pending),
            self.sim_time,
            self.rng.state(),
        )

    def true_sample(self) -> TrajectorySample:
        return TrajectorySample(
            self.sim_time, Pose.trusted(self._pos, self._q), GripperState(self._grip), self.jig_states()
        )

    def relocate(self, pose: Pose) -> None:
        """Teleport the end-effector (workspace change); gripper and jigs are kept."""
        self._pos = pose.position
        self._q = pose.orientation

    def _set_jig(self, jig: str, rt: JigRuntime, now: float) -> None:
        old = self._jigs[jig]
        if rt.current != old.current:
            self._jig_vec = None
            self.transitions.append((now, jig, old.current, rt.current))
        self._jigs[jig] = rt

    def apply_command(self, cmd: ControlCommand) -> None:
        cfg = self.cfg
        now = self.sim_time
        for jig, name in cmd.jig_commands:
            self._pending.append((self._ticks + self._delay_ticks, self._seq, jig, name))
            self._seq += 1
        if self._pending:
            due = [p for p in self._pending if p[0] <= self._ticks]
            if due:
                self._pending = [p for p in self._pending if p[0] > self._ticks]
                for _, _, jig, name in sorted(due):
                    self._set_jig(jig, step(self._jigs[jig], name, now), now)

        if cfg.command_latency_ticks:
            self._latency.append(cmd)
            if len(self._latency) <= cfg.command_latency_ticks:
                cmd = ControlCommand()
            else:
                cmd = self._latency.popleft()

        dt = cfg.dt
        v = _saturate(cmd.linear_velocity, cfg.v_max)
        w = _saturate(cmd.angular_velocity, cfg.w_max)
        p = self._pos
        self._pos = (p[0] + v[0] * dt, p[1] + v[1] * dt, p[2] + v[2] * dt)
        if w != (0.0, 0.0, 0.0):
            self._q = quat.normalize(quat.mul(quat.exp_map((w[0] * dt, w[1] * dt, w[2] * dt)), self._q))
        rate = max(-cfg.g_max, min(cfg.g_max, cmd.gripper_rate))
        self._grip = min(GRIPPER_MAX_MM, max(0.0, self._grip + rate * dt))

        self._ticks += 1
        now = self.sim_time
        for jig, rt in self._jigs.items():
            if rt.timer_deadline is not None:
                self._set_jig(jig, tick(rt, now), now)

    def observe(self) -> tuple[Pose, GripperState, JigStateVector]:
        """Measured pose and gripper (Gaussian noise), exact jig states."""
        cfg = self.cfg
        pos = self._pos
        if cfg.noise_stddev_pos > 0:
            s = cfg.noise_stddev_pos
            pos = (pos[0] + s * self.rng.normal(), pos[1] + s * self.rng.normal(),
                   pos[2] + s * self.rng.normal())
        g = self._grip
        if cfg.noise_stddev_gripper > 0:
            g = min(GRIPPER_MAX_MM, max(0.0, g + cfg.noise_stddev_gripper * self.rng.normal()))
        return Pose.trusted(pos, self._q), GripperState(g), self.jig_states()
