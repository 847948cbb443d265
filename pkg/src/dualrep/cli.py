"""``dualrep`` command line.

Exit status: 0 on success, 1 when the task itself fails (a trial times out,
a jig file describes a nondeterministic machine, transitions cannot be
paired), 2 on usage or parse errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from . import report
from .config import SEED_ENV, build_configs, default_seed, load_config_file, merge_overrides
from .demo import load_demonstration, load_trajectory, resample, save_demonstration, save_trajectory
from .errors import DualrepError, FormatError, JigDefinitionError
from .jigs import JigRegistry, load_registry, parse_jig_definitions
from .metrics import hausdorff_report, jig_sync_error
from .runner import (
    DTW_MAX_CELLS,
    dtw_summary,
    evaluate_dir,
    replay_trial,
    scenario_run,
    trial_outcome,
    trial_rng,
    write_artifacts,
)
from .scenarios import BUILTIN_SCENARIOS, load_scenario, synthesize

log = logging.getLogger("dualrep")

OK, TASK_FAILED, USAGE = 0, 1, 2

# flag -> (section, field)
_CONFIG_FLAGS = {
    "alpha": ("controller", "alpha"),
    "epsilon": ("controller", "epsilon"),
    "epsilon_orientation": ("controller", "epsilon_orientation"),
    "epsilon_gripper": ("controller", "epsilon_gripper"),
    "loop_rate": ("controller", "loop_rate_hz"),
    "timeout": ("controller", "timeout_s"),
    "dt": ("plant", "dt"),
    "v_max": ("plant", "v_max"),
    "w_max": ("plant", "w_max"),
    "g_max": ("plant", "g_max"),
    "latency_ticks": ("plant", "command_latency_ticks"),
    "noise_pos": ("plant", "noise_stddev_pos"),
    "noise_gripper": ("plant", "noise_stddev_gripper"),
    "jig_delay": ("plant", "jig_actuation_delay_s"),
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("controller and plant settings")
    g.add_argument("--config", metavar="FILE",
                   help="JSON file with 'controller' and 'plant' sections")
    g.add_argument("--alpha", type=float, help="proportional gain (default 4.0)")
    g.add_argument("--epsilon", type=float, help="position threshold in m (default 1e-3)")
    g.add_argument("--epsilon-orientation", type=float, help="orientation threshold in rad (default 5e-3)")
    g.add_argument("--epsilon-gripper", type=float, help="gripper threshold in mm (default 0.5)")
    g.add_argument("--loop-rate", type=float, help="control loop rate in Hz (default 20)")
    g.add_argument("--timeout", type=float, help="per-waypoint watchdog in s (default 30)")
    g.add_argument("--dt", type=float, help="plant integration step in s (default 0.05)")
    g.add_argument("--v-max", type=float, help="linear speed limit in m/s (default 0.25)")
    g.add_argument("--w-max", type=float, help="angular speed limit in rad/s (default 1.0)")
    g.add_argument("--g-max", type=float, help="gripper speed limit in mm/s (default 50)")
    g.add_argument("--latency-ticks", type=int, help="velocity command latency in plant ticks")
    g.add_argument("--noise-pos", type=float, help="position observation noise stddev in m")
    g.add_argument("--noise-gripper", type=float, help="gripper observation noise stddev in mm")
    g.add_argument("--jig-delay", type=float, help="jig actuation delay in s")
    g.add_argument("--seed", type=int,
                   help=f"noise seed (default: ${SEED_ENV}, else the plant config's, else 0)")


def _overrides(args, base: Optional[dict] = None) -> dict:
    flags: dict[str, dict] = {"controller": {}, "plant": {}}
    for attr, (section, name) in _CONFIG_FLAGS.items():
        v = getattr(args, attr, None)
        if v is not None:
            flags[section][name] = v
    file_layer = load_config_file(args.config) if getattr(args, "config", None) else None
    return merge_overrides(base, file_layer, flags)


def _seed(args, fallback: int) -> int:
    return args.seed if args.seed is not None else default_seed(fallback)


def _registry(args) -> Optional[JigRegistry]:
    ref = getattr(args, "registry", None)
    return load_registry(ref) if ref else None


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


# -- subcommands ----------------------------------------------------------------


def cmd_synthesize(args) -> int:
    sc = load_scenario(args.script)
    demo = synthesize(sc.script, metadata={"scenario": sc.name})
    if args.rate:
        demo = resample(demo, args.rate)
    save_demonstration(demo, args.output)
    print(f"{args.output}: {len(demo.points)} points, {demo.duration:.3f} s, "
          f"{demo.sample_rate_hz:g} Hz")
    return OK


def cmd_replay(args) -> int:
    demo = load_demonstration(args.demo, _registry(args))
    ccfg, pcfg = build_configs(_overrides(args))
    seed = _seed(args, pcfg.seed)
    traj = replay_trial(demo, ccfg, pcfg, trial_rng(seed, 1))
    ok, why = trial_outcome(demo, traj)
    if args.output:
        save_trajectory(traj, args.output)
    print(f"{'completed' if ok else 'FAILED'}: {len(traj.samples)} samples, "
          f"{traj.duration:.2f} s sim time, {len(traj.jig_events)} jig commands, seed {seed}"
          + (f" ({why})" if why else ""))
    return OK if ok else TASK_FAILED


def _load_pair(args):
    demo = load_demonstration(args.demo, _registry(args))
    traj = load_trajectory(args.executed, demo.registry)
    if args.match_rate:
        demo = resample(demo, args.match_rate)
    return demo, traj


def cmd_eval_hausdorff(args) -> int:
    demo, traj = _load_pair(args)
    rep = hausdorff_report(demo, traj)
    sys.stdout.write(report.dumps(rep.as_dict()) if args.json else report.format_hausdorff(rep))
    return OK


def cmd_eval_dtw(args) -> int:
    demo, traj = _load_pair(args)
    summ = dtw_summary(demo, traj, 1, args.max_cells)
    if args.json:
        sys.stdout.write(report.dumps({"stride": list(summ.stride),
                                       **summ.report.as_dict(with_path=args.path)}))
    else:
        sys.stdout.write(report.format_dtw(summ.report, summ.stride))
    return OK


def cmd_eval_sync(args) -> int:
    demo = load_demonstration(args.demo, _registry(args))
    traj = load_trajectory(args.executed, demo.registry)
    recs = jig_sync_error(demo, traj)
    if args.json:
        sys.stdout.write(report.dumps([r.as_dict() for r in recs]))
    else:
        sys.stdout.write(report.format_sync(recs))
    return OK


def cmd_scenario_list(args) -> int:
    rows = []
    for name in BUILTIN_SCENARIOS:
        sc = load_scenario(name)
        rows.append([name, str(sc.trials), f"{sc.script.duration:.1f}", sc.description])
    sys.stdout.write(report.table(["scenario", "trials", "script (s)", "description"], rows))
    return OK


def write_report(result, out: Path, plots: bool = True) -> list[Path]:
    """Artifacts plus report.json, report.txt, TSV tables and figures."""
    write_artifacts(result, out)
    ev = result.evaluation
    _write_text(out / "report.json", report.dumps({"run": result.manifest(), "evaluation": ev.as_dict()}))
    _write_text(out / "report.txt", report.format_evaluation(ev, f"scenario {result.scenario}"))
    _write_text(out / "trials.tsv", report.tsv(report.TRIAL_HEADERS, report.trial_rows(ev)))
    seg = report.segment_rows(ev)
    if seg:
        _write_text(out / "segments.tsv", report.tsv(report.SEGMENT_HEADERS, seg))
    sync = [[str(t.trial), *row] for t in ev.trials if t.sync for row in report.sync_rows(t.sync)]
    _write_text(out / "sync.tsv", report.tsv(["trial", *report.SYNC_HEADERS], sync))
    figures: list[Path] = []
    if plots:
        from .plotting import render_figures

        k = next((t.trial for t in ev.trials if t.success), 1)
        d = next((d for d in ev.dtw if d.trial == k), None)
        figures = render_figures(result.demo, result.trajectories[k - 1], out,
                                 d.report if d else None, d.stride if d else (1, 1))
    return figures


def cmd_scenario_run(args) -> int:
    sc = load_scenario(args.name)
    overrides = _overrides(args)
    _, pcfg = build_configs(merge_overrides(sc.overrides, overrides))
    result = scenario_run(sc, trials=args.trials, seed=_seed(args, pcfg.seed), overrides=overrides,
                          dtw=args.dtw, match_rate_hz=args.match_rate)
    out = Path(args.out) if args.out else Path("dualrep_runs") / sc.name
    figures = write_report(result, out, plots=not args.no_plots)
    sys.stdout.write(report.format_evaluation(result.evaluation, f"scenario {sc.name}"))
    print(f"\nwrote {out}/ (report.json, report.txt, {len(result.trajectories)} trials"
          f"{', %d figures' % len(figures) if figures else ''})")
    return OK if result.success else TASK_FAILED


def cmd_scenario_eval(args) -> int:
    ev = evaluate_dir(args.directory)
    if args.json:
        sys.stdout.write(report.dumps(ev.as_dict()))
    else:
        sys.stdout.write(report.format_evaluation(ev, str(args.directory)))
    return OK if ev.success else TASK_FAILED


def cmd_jig_check(args) -> int:
    path = Path(args.file)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        defs = parse_jig_definitions(text)
    except JigDefinitionError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return TASK_FAILED
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    rows = []
    for d in defs:
        rows.append([d.id, str(len(d.states)), d.initial, ", ".join(d.commands),
                     str(len(d.command_rules())), str(len(d.timer_rules()))])
    sys.stdout.write(report.table(["jig", "states", "initial", "commands", "command rules",
                                   "timers"], rows))
    print(f"{path}: {len(defs)} jig definition(s) OK")
    return OK


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dualrep",
        description="Record-and-replay of dual demonstrations (robot motion plus jig states) "
                    "against a simulated plant.",
    )
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    s = sub.add_parser("synthesize", help="turn a waypoint script into a demonstration file",
                       description="Sample a .scn waypoint script (or builtin scenario name) "
                                   "into a .dr demonstration.")
    s.add_argument("script", help="scenario name or path to a .scn file")
    s.add_argument("-o", "--output", required=True, help="demonstration file to write")
    s.add_argument("--rate", type=float, help="resample to this rate in Hz after synthesis")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("replay", help="replay a demonstration on the simulated plant",
                       description="Replay a .dr demonstration once and optionally save the "
                                   "executed trajectory.")
    s.add_argument("demo", help="demonstration file (.dr)")
    s.add_argument("-o", "--output", help="trajectory file to write (.dr)")
    s.add_argument("--registry", help="jig definition file overriding the demo's registry")
    _add_config_flags(s)
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("eval", help="compare a demonstration with an executed trajectory",
                       description="Evaluate an executed trajectory against its demonstration.")
    esub = s.add_subparsers(dest="metric", metavar="METRIC", required=True)
    for name, func, helptext in (
        ("hausdorff", cmd_eval_hausdorff, "per-channel Hausdorff distances"),
        ("dtw", cmd_eval_dtw, "DTW time mapping of positions"),
        ("sync", cmd_eval_sync, "spatial error of every jig operation"),
    ):
        e = esub.add_parser(name, help=helptext, description=helptext.capitalize() + ".")
        e.add_argument("demo", help="demonstration file (.dr)")
        e.add_argument("executed", help="executed trajectory file (.dr)")
        e.add_argument("--registry", help="jig definition file overriding the demo's registry")
        e.add_argument("--json", action="store_true", help="print JSON instead of a table")
        if name != "sync":
            e.add_argument("--match-rate", type=float, metavar="HZ",
                           help="resample the demonstration to this rate first")
        if name == "dtw":
            e.add_argument("--max-cells", type=int, default=DTW_MAX_CELLS,
                           help="decimate both sequences above this many DP cells "
                                f"(default {DTW_MAX_CELLS})")
            e.add_argument("--path", action="store_true", help="include the full path in JSON")
        e.set_defaults(func=func)

    s = sub.add_parser("scenario", help="run builtin or scripted scenarios end to end",
                       description="Synthesize, replay k trials, evaluate and write a report.")
    ssub = s.add_subparsers(dest="action", metavar="ACTION", required=True)
    r = ssub.add_parser("run", help="run a scenario and write its report",
                        description="Run a scenario and write trajectories, report.json, "
                                    "report.txt, TSV tables and figures.")
    r.add_argument("name", help=f"builtin ({', '.join(BUILTIN_SCENARIOS)}) or path to a .scn file")
    r.add_argument("--trials", type=int, help="number of trials (default: the scenario's)")
    r.add_argument("--out", help="output directory (default dualrep_runs/NAME)")
    r.add_argument("--no-plots", action="store_true", help="skip the figures")
    r.add_argument("--dtw", choices=("first", "all", "none"), default="first",
                   help="which successful trials get a DTW time mapping (default first)")
    r.add_argument("--match-rate", type=float, metavar="HZ",
                   help="resample the demonstration to this rate before motion metrics")
    _add_config_flags(r)
    r.set_defaults(func=cmd_scenario_run)
    ls = ssub.add_parser("list", help="list builtin scenarios", description="List builtin scenarios.")
    ls.set_defaults(func=cmd_scenario_list)
    ev = ssub.add_parser("eval", help="re-evaluate a run directory from its files",
                         description="Recompute the evaluation of a scenario run directory.")
    ev.add_argument("directory", help="directory written by 'scenario run'")
    ev.add_argument("--json", action="store_true", help="print JSON instead of tables")
    ev.set_defaults(func=cmd_scenario_eval)

    s = sub.add_parser("jig", help="jig definition tools", description="Jig definition tools.")
    jsub = s.add_subparsers(dest="action", metavar="ACTION", required=True)
    c = jsub.add_parser("check", help="validate a jig definition file",
                        description="Parse and validate a .dsl jig definition file.")
    c.add_argument("file", help="jig definition file (.dsl)")
    c.set_defaults(func=cmd_jig_check)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"dualrep: error: {exc}", file=sys.stderr)
        return USAGE
    except DualrepError as exc:
        print(f"dualrep: {exc}", file=sys.stderr)
        return TASK_FAILED
    except ValueError as exc:
        print(f"dualrep: error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
