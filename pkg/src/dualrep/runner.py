"""End-to-end scenario runs: synthesize, replay k trials, evaluate, save.

Everything written to the output directory is a pure function of the
scenario, configuration and seed.  :func:`evaluate_dir` recomputes the
evaluation from the saved files alone and yields the same report.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .config import build_configs, config_dict, merge_overrides
from .controller import ControllerConfig, run_replay
from .demo import (
    Demonstration,
    Trajectory,
    load_demonstration,
    load_trajectory,
    resample,
    save_demonstration,
    save_trajectory,
)
from .errors import FormatError, ReplayTimeout, SyncMismatch
from .metrics import (
    DtwReport,
    ExecutionReport,
    HausdorffReport,
    SyncRecord,
    dtw_mapping,
    execution_stats,
    hausdorff_report,
    jig_sync_error,
    positions,
)
from .plant import CounterRNG, PlantConfig, PlantSim
from .scenarios import Scenario, synthesize

log = logging.getLogger(__name__)

MANIFEST = "run.json"
DTW_MAX_CELLS = 40_000_000
"""Above this many DP cells both sequences are decimated before DTW."""


# -- single trials --------------------------------------------------------


def trial_rng(seed: int, trial: int) -> CounterRNG:
    """Noise stream of trial ``trial`` (1-based) under run seed ``seed``."""
    return CounterRNG(seed).split(trial)


def replay_trial(
    demo: Demonstration,
    ccfg: ControllerConfig,
    pcfg: PlantConfig,
    rng: Optional[CounterRNG] = None,
) -> Trajectory:
    """One replay; a watchdog expiry returns the partial trajectory instead of raising."""
    plant = PlantSim.for_demo(demo, pcfg, rng)
    try:
        return run_replay(demo, plant, ccfg)
    except ReplayTimeout as exc:
        log.info("replay aborted: %s", exc)
        return exc.partial


def trial_outcome(
    demo: Demonstration, traj: Trajectory, expected: Optional[Mapping[str, str]] = None
) -> tuple[bool, str]:
    """Whether a trial succeeded, and why not.

    Success means every waypoint was reached and the final jig states equal
    both the demonstration's and the scenario's expectation.
    """
    if traj.metadata.get("outcome") != "completed":
        idx = traj.metadata.get("failed_index")
        return False, f"timeout at waypoint {idx}" if idx is not None else "replay did not complete"
    if not traj.samples:
        return False, "empty trajectory"
    final = traj.samples[-1].jig_state
    want = demo.points[-1].jig_state
    bad = [j for j in want if final[j] != want[j]]
    if bad:
        return False, "final jig state differs from demonstration: " + ", ".join(
            f"{j}={final[j]} (want {want[j]})" for j in bad)
    if expected:
        bad = [j for j, s in expected.items() if final[j] != s]
        if bad:
            return False, "final jig state differs from expectation: " + ", ".join(
                f"{j}={final[j]} (want {expected[j]})" for j in bad)
    return True, ""


# -- evaluation -------------------------------------------------------------


@dataclass(frozen=True)
class SegmentReport:
    workspace: str
    demo_range: tuple[int, int]
    exec_range: tuple[int, int]
    hausdorff: Optional[HausdorffReport]

    def as_dict(self) -> dict:
        return {
            "workspace": self.workspace,
            "demo_range": list(self.demo_range),
            "exec_range": list(self.exec_range),
            "hausdorff": self.hausdorff.as_dict() if self.hausdorff else None,
        }


@dataclass(frozen=True)
class TrialEvaluation:
    trial: int
    success: bool
    reason: str
    duration_s: float
    hausdorff: HausdorffReport
    sync: Optional[list[SyncRecord]]
    sync_error: str = ""
    segments: list[SegmentReport] = field(default_factory=list)

    @property
    def sync_max(self) -> Optional[float]:
        if not self.sync:
            return None
        return max(r.distance for r in self.sync)

    def as_dict(self) -> dict:
        return {
            "trial": self.trial,
            "success": self.success,
            "reason": self.reason,
            "duration_s": self.duration_s,
            "hausdorff": self.hausdorff.as_dict(),
            "sync_max_m": self.sync_max,
            "sync": [r.as_dict() for r in self.sync] if self.sync is not None else None,
            "sync_error": self.sync_error,
            "segments": [s.as_dict() for s in self.segments],
        }


@dataclass(frozen=True)
class DtwSummary:
    trial: int
    stride: tuple[int, int]
    """Decimation applied to (demo, executed) before alignment; (1, 1) is none."""
    report: DtwReport

    def as_dict(self) -> dict:
        return {"trial": self.trial, "stride": list(self.stride), **self.report.as_dict()}


@dataclass(frozen=True)
class EvaluationReport:
    execution: ExecutionReport
    trials: list[TrialEvaluation]
    dtw: list[DtwSummary] = field(default_factory=list)
    options: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.execution.success

    def as_dict(self) -> dict:
        return {
            "success": self.success,
            "options": dict(self.options),
            "execution": self.execution.as_dict(),
            "trials": [t.as_dict() for t in self.trials],
            "dtw": [d.as_dict() for d in self.dtw],
        }


def _segment_bounds(demo: Demonstration) -> list[tuple[str, int]]:
    segs = demo.metadata.get("segments")
    start_ws = segs[0]["workspace"] if segs else "ws1"
    return [(start_ws, 0)] + [(r["workspace"], int(r["index"])) for r in demo.relocations]


def segment_reports(demo: Demonstration, traj: Trajectory) -> list[SegmentReport]:
    """Per-workspace Hausdorff reports; empty unless the demo relocates."""
    bounds = _segment_bounds(demo)
    if len(bounds) < 2:
        return []
    exec_starts = [0] + [int(r["sample_index"]) for r in traj.metadata.get("relocations", [])]
    out = []
    for k, (ws, d0) in enumerate(bounds):
        d1 = bounds[k + 1][1] if k + 1 < len(bounds) else len(demo.points)
        if k < len(exec_starts):
            e0 = exec_starts[k]
            e1 = exec_starts[k + 1] if k + 1 < len(exec_starts) else len(traj.samples)
        else:
            e0 = e1 = len(traj.samples)
        rep = None
        if d1 > d0 and e1 > e0:
            sub_demo = Demonstration(demo.points[d0:d1], demo.registry, demo.sample_rate_hz)
            sub_exec = Trajectory(traj.samples[e0:e1], registry=traj.registry)
            rep = hausdorff_report(sub_demo, sub_exec)
        out.append(SegmentReport(ws, (d0, d1), (e0, e1), rep))
    return out


def _strides(n: int, m: int, max_cells: int) -> tuple[int, int]:
    s = 1
    while (-(-n // s)) * (-(-m // s)) > max_cells:
        s += 1
    return s, s


def dtw_summary(
    demo: Demonstration, traj: Trajectory, trial: int, max_cells: int = DTW_MAX_CELLS
) -> DtwSummary:
    """Positional DTW of demo against execution, decimating when too large."""
    X, Y = positions(demo), positions(traj)
    sx, sy = _strides(len(X), len(Y), max_cells)
    Xs, Ys = X[::sx], Y[::sy]
    # keep both endpoints so the path still spans the full recordings
    if (len(X) - 1) % sx:
        Xs = list(Xs) + [X[-1]]
    if (len(Y) - 1) % sy:
        Ys = list(Ys) + [Y[-1]]
    return DtwSummary(trial, (sx, sy), dtw_mapping(Xs, Ys, "euclidean"))


def evaluate(
    demo: Demonstration,
    trajectories: Sequence[Trajectory],
    expected: Optional[Mapping[str, str]] = None,
    *,
    dtw: str = "first",
    match_rate_hz: Optional[float] = None,
) -> EvaluationReport:
    """Evaluate executed trials against their demonstration.

    ``dtw`` is ``"first"`` (first successful trial), ``"all"`` or ``"none"``.
    With ``match_rate_hz`` the demonstration is resampled to that rate before
    the motion comparisons; jig synchronization always uses the raw record.
    """
    if dtw not in ("first", "all", "none"):
        raise ValueError(f"dtw must be 'first', 'all' or 'none', got {dtw!r}")
    ref = resample(demo, match_rate_hz) if match_rate_hz else demo
    outcomes = [trial_outcome(demo, tr, expected) for tr in trajectories]
    trials = []
    dtws = []
    for k, (tr, (ok, why)) in enumerate(zip(trajectories, outcomes), 1):
        try:
            sync, sync_err = jig_sync_error(demo, tr), ""
        except SyncMismatch as exc:
            sync, sync_err = None, str(exc)
        trials.append(TrialEvaluation(
            k, ok, why, tr.duration, hausdorff_report(ref, tr), sync, sync_err,
            segment_reports(ref, tr),
        ))
        if ok and (dtw == "all" or (dtw == "first" and not dtws)):
            dtws.append(dtw_summary(ref, tr, k))
    execution = execution_stats(demo, list(trajectories), [ok for ok, _ in outcomes])
    options = {"dtw": dtw, "match_rate_hz": match_rate_hz,
               "expected": dict(expected) if expected else {}}
    return EvaluationReport(execution, trials, dtws, options)


# -- whole scenarios ----------------------------------------------------------


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    seed: int
    controller: ControllerConfig
    plant: PlantConfig
    demo: Demonstration
    trajectories: list[Trajectory]
    evaluation: EvaluationReport

    @property
    def success(self) -> bool:
        return self.evaluation.success

    def manifest(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "trials": len(self.trajectories),
            "demo": "demo.dr",
            "trajectories": [trial_filename(k) for k in range(1, len(self.trajectories) + 1)],
            "config": config_dict(self.controller, self.plant),
            "evaluation": dict(self.evaluation.options),
        }


def trial_filename(k: int) -> str:
    return f"trial_{k:02d}.dr"


def scenario_run(
    scenario: Scenario,
    *,
    trials: Optional[int] = None,
    seed: Optional[int] = None,
    overrides: Optional[Mapping] = None,
    dtw: str = "first",
    match_rate_hz: Optional[float] = None,
) -> ScenarioResult:
    """Synthesize the scenario's demonstration, replay it and evaluate.

    ``overrides`` (``{"controller": {...}, "plant": {...}}``) win over the
    scenario's own settings.  Trial k draws noise from
    ``CounterRNG(seed).split(k)``; ``seed`` defaults to the plant config's.
    """
    merged = merge_overrides(scenario.overrides, overrides)
    ccfg, pcfg = build_configs(merged)
    k_trials = scenario.trials if trials is None else int(trials)
    if k_trials < 1:
        raise ValueError(f"trials must be >= 1, got {k_trials}")
    run_seed = pcfg.seed if seed is None else int(seed)
    demo = synthesize(scenario.script, metadata={"scenario": scenario.name})
    trajs = []
    for k in range(1, k_trials + 1):
        tr = replay_trial(demo, ccfg, pcfg, trial_rng(run_seed, k))
        trajs.append(tr)
        log.info("%s trial %d: %s, %d ticks", scenario.name, k,
                 tr.metadata.get("outcome"), len(tr.samples))
    ev = evaluate(demo, trajs, scenario.expected_final, dtw=dtw, match_rate_hz=match_rate_hz)
    return ScenarioResult(scenario.name, run_seed, ccfg, pcfg, demo, trajs, ev)


def write_artifacts(result: ScenarioResult, out_dir: Union[str, Path]) -> Path:
    """Write the demo, every trial and the run manifest; returns ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_demonstration(result.demo, out / "demo.dr")
    for k, tr in enumerate(result.trajectories, 1):
        save_trajectory(tr, out / trial_filename(k))
    (out / MANIFEST).write_text(json.dumps(result.manifest(), indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")
    return out


def evaluate_dir(out_dir: Union[str, Path]) -> EvaluationReport:
    """Re-evaluate a run directory from its files alone."""
    out = Path(out_dir)
    try:
        man = json.loads((out / MANIFEST).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"{out / MANIFEST}: cannot read manifest ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{out / MANIFEST}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    demo = load_demonstration(out / man["demo"])
    trajs = [load_trajectory(out / name, demo.registry) for name in man["trajectories"]]
    opts = man.get("evaluation", {})
    return evaluate(demo, trajs, opts.get("expected") or None,
                    dtw=opts.get("dtw", "first"), match_rate_hz=opts.get("match_rate_hz"))
