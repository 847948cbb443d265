"""Figures for scenario reports, rendered off-screen to PNG files."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .demo import Demonstration, Trajectory  # noqa: E402
from .metrics import DtwReport, demo_transitions, positions, times  # noqa: E402

PathLike = Union[str, Path]
_PNG_META = {"Software": None}


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def _normalized(t: np.ndarray) -> np.ndarray:
    span = t[-1] - t[0]
    return (t - t[0]) / span if span > 0 else np.zeros_like(t)


def plot_positions(demo: Demonstration, traj: Trajectory, path: PathLike) -> Path:
    """x, y, z against normalized time: demonstration dashed, execution solid."""
    td, te = _normalized(times(demo)), _normalized(times(traj))
    pd, pe = positions(demo), positions(traj)
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8, 6))
    for k, (ax, name) in enumerate(zip(axes, "xyz")):
        ax.plot(td, pd[:, k], "--", color="tab:gray", lw=1.2, label="demonstration")
        ax.plot(te, pe[:, k], "-", color="tab:blue", lw=1.0, label="execution")
        ax.set_ylabel(f"{name} (m)")
    axes[0].legend(loc="upper right", fontsize="small")
    axes[-1].set_xlabel("normalized time")
    fig.tight_layout()
    return _save(fig, path)


def _state_codes(records, jig: str, states: Sequence[str]) -> np.ndarray:
    index = {s: i for i, s in enumerate(states)}
    return np.array([index[r.jig_state[jig]] for r in records], dtype=float)


def plot_jig_timeline(demo: Demonstration, traj: Trajectory, path: PathLike) -> Path:
    """Visible state of every jig against normalized time."""
    jigs = list(demo.registry)
    td, te = _normalized(times(demo)), _normalized(times(traj))
    fig, axes = plt.subplots(len(jigs), 1, sharex=True, figsize=(8, 1.6 * len(jigs) + 0.6))
    axes = np.atleast_1d(axes)
    for ax, jig in zip(axes, jigs):
        states = demo.registry[jig].states
        ax.step(td, _state_codes(demo.points, jig, states), "--", where="post",
                color="tab:gray", lw=1.2, label="demonstration")
        ax.step(te, _state_codes(traj.samples, jig, states), "-", where="post",
                color="tab:orange", lw=1.0, label="execution")
        ax.set_yticks(range(len(states)))
        ax.set_yticklabels(states, fontsize="x-small")
        ax.set_ylim(-0.5, len(states) - 0.5)
        ax.set_title(jig, fontsize="small", loc="left")
    axes[0].legend(loc="upper right", fontsize="x-small")
    axes[-1].set_xlabel("normalized time")
    fig.tight_layout()
    return _save(fig, path)


def plot_trajectory_3d(demo: Demonstration, traj: Trajectory, path: PathLike) -> Path:
    """End-effector paths with the places where jigs were operated."""
    pd, pe = positions(demo), positions(traj)
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(projection="3d")
    ax.plot(pd[:, 0], pd[:, 1], pd[:, 2], "--", color="tab:gray", lw=1.0, label="demonstration")
    ax.plot(pe[:, 0], pe[:, 1], pe[:, 2], "-", color="tab:blue", lw=0.8, label="execution")
    idx = sorted(n for tr in demo_transitions(demo).values() for n, _, _ in tr)
    if idx:
        dp = pd[idx]
        ax.scatter(dp[:, 0], dp[:, 1], dp[:, 2], marker="o", s=40, facecolors="none",
                   edgecolors="tab:red", label="demo jig transition")
    if traj.jig_events:
        ep = np.array([ev.pose.position for ev in traj.jig_events])
        ax.scatter(ep[:, 0], ep[:, 1], ep[:, 2], marker="x", s=30, color="tab:green",
                   label="executed jig command")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_zlabel("z (m)")
    ax.legend(loc="upper left", fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def plot_dtw(
    demo: Demonstration,
    traj: Trajectory,
    rep: DtwReport,
    path: PathLike,
    stride: tuple[int, int] = (1, 1),
) -> Path:
    """DTW time mapping: execution time against demonstration time."""
    td, te = times(demo), times(traj)
    i = np.minimum(rep.path[:, 0] * stride[0], len(td) - 1)
    j = np.minimum(rep.path[:, 1] * stride[1], len(te) - 1)
    slope, intercept, r2 = rep.linear_fit
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.plot(td[i] - td[0], te[j] - te[0], "-", color="tab:blue", lw=1.2, label="DTW mapping")
    # the fit lives in (decimated) index space; map it back through the time stamps
    ii = np.arange(len(td))
    jj = stride[1] * (slope * ii / stride[0] + intercept)
    ax.plot(td - td[0], np.interp(jj, np.arange(len(te)), te) - te[0],
            ":", color="tab:red", lw=1.0, label=f"linear fit (r² = {r2:.4f})")
    ax.set_xlabel("demonstration time (s)")
    ax.set_ylabel("execution time (s)")
    ax.legend(loc="upper left", fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def render_figures(
    demo: Demonstration,
    traj: Trajectory,
    out_dir: PathLike,
    dtw: Optional[DtwReport] = None,
    stride: tuple[int, int] = (1, 1),
    prefix: str = "",
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [
        plot_positions(demo, traj, out / f"{prefix}positions.png"),
        plot_jig_timeline(demo, traj, out / f"{prefix}jig_timeline.png"),
        plot_trajectory_3d(demo, traj, out / f"{prefix}trajectory_3d.png"),
    ]
    if dtw is not None:
        paths.append(plot_dtw(demo, traj, dtw, out / f"{prefix}dtw_mapping.png", stride))
    return paths
