"""Closed-loop replay of a dual demonstration.

Each control tick the end-effector is driven toward the current target
point with a proportional velocity command, every jig whose state differs
from the target's gets its advancing command, and the target index moves on
once pose and jig states both match.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional

from . import quat
from .demo import DemoPoint, Demonstration, GripperState, JigEvent, Pose, Trajectory, TrajectorySample
from .errors import ReplayTimeout
from .jigs import JigCommandSet, JigStateVector, diff

if TYPE_CHECKING:
    from .plant import PlantSim


@dataclass(frozen=True)
class ControllerConfig:
    alpha: float = 4.0
    """Proportional gain (1/s)."""
    epsilon: float = 1.0e-3
    """Position threshold for advancing the target index (m)."""
    loop_rate_hz: float = 20.0
    epsilon_orientation: float = 5e-3
    """Orientation threshold (rad)."""
    epsilon_gripper: float = 0.5
    """Gripper-width threshold (mm)."""
    timeout_s: float = 30.0
    """Per-waypoint watchdog in sim time."""

    def __post_init__(self) -> None:
        for name in ("alpha", "epsilon", "loop_rate_hz", "epsilon_orientation",
                     "epsilon_gripper", "timeout_s"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"ControllerConfig.{name} must be a finite number > 0, got {v!r}")

    @property
    def period(self) -> float:
        return 1.0 / self.loop_rate_hz


@dataclass(frozen=True)
class ControlCommand:
    linear_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    angular_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gripper_rate: float = 0.0
    jig_commands: JigCommandSet = ()


@dataclass(frozen=True)
class ReplayState:
    target_index: int = 0
    sim_time: float = 0.0
    finished: bool = False
    waypoint_entry_time: float = 0.0
    latched: frozenset = field(default_factory=frozenset)
    """(jig, timed state, return state) triples already reached for the
    current run of the demonstrated state; see :func:`control_tick`."""


def compute_motion_command(
    target: DemoPoint, current: tuple[Pose, GripperState], cfg: ControllerConfig
) -> ControlCommand:
    """Proportional command toward ``target``; jig commands are left empty."""
    pose, grip = current
    a = cfg.alpha
    tp, cp = target.pose.position, pose.position
    lin = (a * (tp[0] - cp[0]), a * (tp[1] - cp[1]), a * (tp[2] - cp[2]))
    rv = quat.error_vector(target.pose.orientation, pose.orientation)
    ang = (a * rv[0], a * rv[1], a * rv[2])
    return ControlCommand(lin, ang, a * (target.gripper.width - grip.width))


def _jig_satisfied(
    target: Mapping[str, str], observed: Mapping[str, str], latched: frozenset
) -> bool:
    for jig, want in target.items():
        have = observed[jig]
        if have != want and (jig, want, have) not in latched:
            return False
    return True


def should_advance(
    target: DemoPoint,
    current: tuple[Pose, GripperState],
    jig_current: Mapping[str, str],
    cfg: ControllerConfig,
    latched: frozenset = frozenset(),
) -> bool:
    """True when every pose channel is within threshold and jig states match."""
    pose, grip = current
    tp, cp = target.pose.position, pose.position
    dx, dy, dz = tp[0] - cp[0], tp[1] - cp[1], tp[2] - cp[2]
    if math.sqrt(dx * dx + dy * dy + dz * dz) > cfg.epsilon:
        return False
    if quat.angle_between(target.pose.orientation, pose.orientation) > cfg.epsilon_orientation:
        return False
    if abs(target.gripper.width - grip.width) > cfg.epsilon_gripper:
        return False
    return _jig_satisfied(target.jig_state, jig_current, latched)


def _update_latches(
    demo: Demonstration, target: JigStateVector, observed: Mapping[str, str], latched: frozenset
) -> frozenset:
    # A timed demo state (e.g. a pressed tip ejector) counts as done once the
    # plant has been seen in it; its own timer firing before the demo leaves
    # that state is then not a new mismatch.
    keep = {item for item in latched if target[item[0]] == item[1]}
    for jig, want in target.items():
        if observed[jig] == want:
            rule = demo.registry[jig].timer_from(want)
            if rule is not None:
                keep.add((jig, want, rule.target))
    return frozenset(keep) if keep != latched else latched


def control_tick(
    demo: Demonstration,
    state: ReplayState,
    observation: tuple[Pose, GripperState, JigStateVector],
    cfg: ControllerConfig,
) -> tuple[ControlCommand, ReplayState]:
    """One control period: command toward point n, then maybe advance n.

    Raises :class:`ReplayTimeout` when point n has been pursued for longer
    than ``cfg.timeout_s``.
    """
    if state.finished:
        raise ValueError("replay already finished")
    n = state.target_index
    if state.sim_time - state.waypoint_entry_time > cfg.timeout_s:
        raise ReplayTimeout(n, state.sim_time, cfg.timeout_s)
    target = demo.points[n]
    pose, grip, jig_obs = observation
    latched = _update_latches(demo, target.jig_state, jig_obs, state.latched)
    motion = compute_motion_command(target, (pose, grip), cfg)
    wanted = {j: s for j, s in target.jig_state.items() if (j, s, jig_obs[j]) not in latched}
    cmds = diff(wanted, {j: jig_obs[j] for j in wanted}, demo.registry)
    cmd = ControlCommand(motion.linear_velocity, motion.angular_velocity, motion.gripper_rate, cmds)
    t_next = state.sim_time + cfg.period
    if should_advance(target, (pose, grip), jig_obs, cfg, latched):
        n += 1
        return cmd, ReplayState(n, t_next, n >= len(demo.points), state.sim_time, latched)
    return cmd, replace(state, sim_time=t_next, latched=latched)


def run_replay(
    demo: Demonstration,
    plant: "PlantSim",
    cfg: Optional[ControllerConfig] = None,
) -> Trajectory:
    """Drive ``plant`` through every point of ``demo`` and record what happened.

    Samples hold the plant's true state at each tick.  Jig events carry the
    true pose at the moment each command was issued.  Workspace relocations
    listed in the demo metadata teleport the plant when their index becomes
    the target.

    On a watchdog expiry the :class:`ReplayTimeout` carries the samples
    recorded so far in its ``partial`` attribute.
    """
    cfg = cfg or ControllerConfig()
    substeps = plant.substeps_for(cfg.period)
    relocate_at = {int(r["index"]): r.get("workspace") for r in demo.relocations}
    state = ReplayState(sim_time=plant.sim_time, waypoint_entry_time=plant.sim_time)
    samples: list[TrajectorySample] = []
    events: list[JigEvent] = []
    reloc_log: list[dict] = []
    try:
        while True:
            if state.target_index in relocate_at and not (
                reloc_log and reloc_log[-1]["demo_index"] == state.target_index
            ):
                plant.relocate(demo.points[state.target_index].pose)
                reloc_log.append({
                    "demo_index": state.target_index,
                    "sample_index": len(samples),
                    "workspace": relocate_at[state.target_index],
                })
            truth = plant.true_sample()
            samples.append(truth)
            obs = plant.observe()
            # read the clock from the plant: summing periods drifts
            if state.sim_time != truth.t:
                state = replace(state, sim_time=truth.t)
            cmd, state = control_tick(demo, state, obs, cfg)
            for jig, name in cmd.jig_commands:
                events.append(JigEvent(truth.t, jig, name, truth.pose))
            if state.finished:
                break
            for i in range(substeps):
                plant.apply_command(cmd if i == 0 else replace(cmd, jig_commands=()))
    except ReplayTimeout as exc:
        meta = {"outcome": "timeout", "failed_index": exc.index}
        if reloc_log:
            meta["relocations"] = reloc_log
        exc.partial = Trajectory(tuple(samples), tuple(events), registry=demo.registry, metadata=meta)
        raise
    meta = {"outcome": "completed"}
    if reloc_log:
        meta["relocations"] = reloc_log
    return Trajectory(tuple(samples), tuple(events), registry=demo.registry, metadata=meta)
