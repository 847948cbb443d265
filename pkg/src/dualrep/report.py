"""Serialize evaluation results as JSON, tab-separated rows and aligned tables."""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from typing import Optional

import numpy as np

from .metrics import DtwReport, ExecutionReport, HausdorffReport, SyncRecord


def jsonable(obj):
    """Plain JSON types; non-finite floats become ``None``."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _fmt(x, spec: str) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "-"
    return format(x, spec)


def _numeric(cell: str) -> bool:
    if cell == "-":
        return True
    try:
        float(cell)
    except ValueError:
        return False
    return True


def table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Columns padded to their widest cell; numeric columns right-aligned."""
    widths = [len(h) for h in headers]
    for r in rows:
        for i, cell in enumerate(r):
            widths[i] = max(widths[i], len(cell))
    right = [i > 0 and bool(rows) and all(_numeric(r[i]) for r in rows) for i in range(len(headers))]

    def line(cells):
        return "  ".join(c.rjust(w) if rj else c.ljust(w)
                         for c, w, rj in zip(cells, widths, right)).rstrip()

    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), sep] + [line(r) for r in rows]) + "\n"


def tsv(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    return "\n".join("\t".join(r) for r in [headers, *rows]) + "\n"


# -- single reports ---------------------------------------------------------------


def format_hausdorff(rep: HausdorffReport) -> str:
    rows = [
        ["position", _fmt(rep.position * 1e3, ".4f"), "mm", str(tuple(rep.pairs.get("position", ())))],
        ["orientation", _fmt(rep.orientation, ".3e"), "rad",
         str(tuple(rep.pairs.get("orientation", ())))],
        ["gripper", _fmt(rep.gripper, ".4f"), "mm", str(tuple(rep.pairs.get("gripper", ())))],
    ]
    return table(["channel", "hausdorff", "unit", "argmax (ref, exec)"], rows)


def format_dtw(rep: DtwReport, stride: Optional[tuple[int, int]] = None) -> str:
    slope, intercept, r2 = rep.linear_fit
    rows = [
        ["path length", str(len(rep.path))],
        ["total cost", _fmt(rep.total_cost, ".6g")],
        ["slope", _fmt(slope, ".6g")],
        ["intercept", _fmt(intercept, ".6g")],
        ["r^2", _fmt(r2, ".6f")],
    ]
    if stride is not None and tuple(stride) != (1, 1):
        rows.append(["decimation", f"{stride[0]} x {stride[1]}"])
    return table(["dtw", "value"], rows)


def sync_rows(records: Sequence[SyncRecord]) -> list[list[str]]:
    return [
        [r.jig, f"{r.transition[0]} -> {r.transition[1]}", r.command, str(r.demo_index),
         _fmt(r.distance * 1e3, ".4f")]
        for r in records
    ]


SYNC_HEADERS = ["jig", "transition", "command", "demo index", "distance (mm)"]


def format_sync(records: Sequence[SyncRecord]) -> str:
    if not records:
        return "no commanded jig transitions\n"
    return table(SYNC_HEADERS, sync_rows(records))


def format_execution(rep: ExecutionReport) -> str:
    rows = [
        ["success", f"{rep.success_count}/{len(rep.trials)}"],
        ["demonstration (s)", _fmt(rep.demo_duration_s, ".2f")],
        ["execution mean (s)", _fmt(rep.exec_duration_s, ".2f")],
        ["execution stdev (s)", _fmt(rep.exec_duration_std_s, ".3f")],
        ["ratio", _fmt(rep.ratio, ".2f")],
    ]
    return table(["execution", "value"], rows)


# -- whole evaluations ---------------------------------------------------------------


TRIAL_HEADERS = ["trial", "success", "duration (s)", "position (mm)", "orientation (rad)",
                 "gripper (mm)", "sync max (mm)", "note"]


def trial_rows(ev) -> list[list[str]]:
    rows = []
    for t in ev.trials:
        h = t.hausdorff
        note = t.reason or t.sync_error
        rows.append([
            str(t.trial), "yes" if t.success else "no", _fmt(t.duration_s, ".2f"),
            _fmt(h.position * 1e3, ".4f"), _fmt(h.orientation, ".3e"), _fmt(h.gripper, ".4f"),
            _fmt(t.sync_max * 1e3 if t.sync_max is not None else None, ".4f"), note,
        ])
    return rows


SEGMENT_HEADERS = ["trial", "workspace", "demo points", "exec samples", "position (mm)",
                   "orientation (rad)", "gripper (mm)"]


def segment_rows(ev) -> list[list[str]]:
    rows = []
    for t in ev.trials:
        for s in t.segments:
            h = s.hausdorff
            rows.append([
                str(t.trial), s.workspace, str(s.demo_range[1] - s.demo_range[0]),
                str(s.exec_range[1] - s.exec_range[0]),
                _fmt(h.position * 1e3 if h else None, ".4f"),
                _fmt(h.orientation if h else None, ".3e"),
                _fmt(h.gripper if h else None, ".4f"),
            ])
    return rows


def format_evaluation(ev, title: str = "") -> str:
    parts = []
    if title:
        parts.append(title + "\n")
    parts.append(format_execution(ev.execution))
    parts.append(table(TRIAL_HEADERS, trial_rows(ev)))
    seg = segment_rows(ev)
    if seg:
        parts.append(table(SEGMENT_HEADERS, seg))
    for d in ev.dtw:
        parts.append(f"time mapping, trial {d.trial}\n" + format_dtw(d.report, d.stride))
    return "\n".join(parts)
