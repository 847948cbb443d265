"""Trajectory comparison: Hausdorff distance, DTW time mapping, jig sync, timing."""

from __future__ import annotations

import math
import statistics
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .demo import Demonstration, Trajectory
from .errors import SyncMismatch

Metric = Union[str, Callable[[object, object], float]]
UNIT_TOL = 1e-6


def euclidean(a, b) -> float:
    return math.dist(np.atleast_1d(a), np.atleast_1d(b))


def angular_distance(q1, q2) -> float:
    """Rotation angle between unit quaternions, 2*acos(|<q1, q2>|), in [0, pi].

    Computed in the equivalent half-angle form so that equal inputs give 0
    exactly; see :func:`dualrep.quat.angle_between`.
    """
    a = np.asarray(q1, dtype=float)
    b = np.asarray(q2, dtype=float)
    for q in (a, b):
        if q.shape != (4,) or abs(float(np.linalg.norm(q)) - 1.0) > UNIT_TOL:
            raise ValueError(f"not a unit quaternion: {q!r}")
    return float(_angles(a, b))


def _angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Broadcast angular distance over the last axis of quaternion arrays."""
    s = np.where((A * B).sum(axis=-1) < 0.0, -1.0, 1.0)[..., None]
    num = np.sqrt(((A - s * B) ** 2).sum(axis=-1))
    den = np.sqrt(((A + s * B) ** 2).sum(axis=-1))
    return 4.0 * np.arctan2(num, den)


def _as_points(A, metric: Metric) -> np.ndarray:
    arr = np.asarray(A, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] == 0:
        raise ValueError("point set must be non-empty")
    if metric == "angular":
        if arr.shape[1] != 4:
            raise ValueError("angular metric needs quaternions (w, x, y, z)")
        norms = np.linalg.norm(arr, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ValueError("angular metric needs unit quaternions")
    return arr


def _nearest(A: np.ndarray, B: np.ndarray, metric: Metric) -> tuple[np.ndarray, np.ndarray]:
    """Distance from each row of A to its nearest row of B, and that row's index."""
    # recordings repeat poses while dwelling; duplicate rows slow the tree
    # queries badly, so search on unique rows and map back
    Bu, b_first = np.unique(B, axis=0, return_index=True)
    Au, a_inv = np.unique(A, axis=0, return_inverse=True)
    a_inv = a_inv.reshape(-1)
    if len(Bu) < len(B) or len(Au) < len(A):
        d, j = _nearest(Au, Bu, metric)
        return d[a_inv], b_first[j][a_inv]
    if metric == "euclidean":
        d, j = cKDTree(B).query(A, k=1)
        return np.asarray(d, dtype=float), np.asarray(j)
    if metric == "angular":
        m = len(B)
        # nearest by chord on B and -B is nearest by |dot|; re-rank a few
        # candidates by the exact angle to settle near-ties
        k = min(4, 2 * m)
        _, cand = cKDTree(np.vstack([B, -B])).query(A, k=k)
        cand = np.asarray(cand).reshape(len(A), k) % m
        ang = _angles(A[:, None, :], B[cand])
        pick = np.argmin(ang, axis=1)
        rows = np.arange(len(A))
        return ang[rows, pick], cand[rows, pick]
    raise ValueError(f"unknown metric {metric!r}")


def _nearest_exhaustive(A, B, metric: Metric, cells: int = 2_000_000):
    if callable(metric):
        dist = np.empty(len(A))
        idx = np.empty(len(A), dtype=int)
        for i, a in enumerate(A):
            ds = [metric(a, b) for b in B]
            idx[i] = int(np.argmin(ds))
            dist[i] = ds[idx[i]]
        return dist, idx
    dist = np.empty(len(A))
    idx = np.empty(len(A), dtype=int)
    chunk = max(1, cells // len(B))
    for s in range(0, len(A), chunk):
        a = A[s:s + chunk]
        if metric == "euclidean":
            d = np.sqrt(((a[:, None, :] - B[None, :, :]) ** 2).sum(axis=2))
        elif metric == "angular":
            d = _angles(a[:, None, :], B[None, :, :])
        else:
            raise ValueError(f"unknown metric {metric!r}")
        j = np.argmin(d, axis=1)
        idx[s:s + chunk] = j
        dist[s:s + chunk] = d[np.arange(len(a)), j]
    return dist, idx


def directed_argmax(A, B, d_f: Metric = "euclidean", exhaustive: bool = False) -> tuple[float, int, int]:
    """sup over a in A of inf over b in B of d_f(a, b), with the attaining pair.

    String metrics ``"euclidean"`` and ``"angular"`` use exact nearest
    neighbour search; ``exhaustive=True`` (or a callable metric) compares
    every pair instead.
    """
    if callable(d_f):
        A_, B_ = list(A), list(B)
        if not A_ or not B_:
            raise ValueError("point sets must be non-empty")
        dist, idx = _nearest_exhaustive(A_, B_, d_f)
    else:
        A_, B_ = _as_points(A, d_f), _as_points(B, d_f)
        if exhaustive:
            dist, idx = _nearest_exhaustive(A_, B_, d_f)
        else:
            dist, idx = _nearest(A_, B_, d_f)
    i = int(np.argmax(dist))
    return float(dist[i]), i, int(idx[i])


def directed_distance(A, B, d_f: Metric = "euclidean", exhaustive: bool = False) -> float:
    return directed_argmax(A, B, d_f, exhaustive)[0]


def hausdorff(X, Y, d_f: Metric = "euclidean", exhaustive: bool = False) -> float:
    return max(directed_distance(X, Y, d_f, exhaustive), directed_distance(Y, X, d_f, exhaustive))


def _hausdorff_pair(X, Y, d_f: Metric) -> tuple[float, tuple[int, int]]:
    dxy, i, j = directed_argmax(X, Y, d_f)
    dyx, k, l = directed_argmax(Y, X, d_f)
    if dxy >= dyx:
        return dxy, (i, j)
    return dyx, (l, k)


# -- channel extraction --------------------------------------------------

Series = Union[Demonstration, Trajectory]


def _records(s: Series):
    return s.points if isinstance(s, Demonstration) else s.samples


def positions(s: Series) -> np.ndarray:
    return np.array([r.pose.position for r in _records(s)], dtype=float)


def orientations(s: Series) -> np.ndarray:
    return np.array([r.pose.orientation for r in _records(s)], dtype=float)


def gripper_widths(s: Series) -> np.ndarray:
    return np.array([r.gripper.width for r in _records(s)], dtype=float)


def times(s: Series) -> np.ndarray:
    return np.array([r.t for r in _records(s)], dtype=float)


@dataclass(frozen=True)
class HausdorffReport:
    position: float
    """meters"""
    orientation: float
    """radians"""
    gripper: float
    """millimeters"""
    pairs: dict = field(default_factory=dict)
    """channel -> (index into reference, index into executed) attaining the maximum"""

    def as_dict(self) -> dict:
        return {
            "position_m": self.position,
            "orientation_rad": self.orientation,
            "gripper_mm": self.gripper,
            "pairs": {k: list(v) for k, v in self.pairs.items()},
        }


def hausdorff_report(reference: Series, executed: Series) -> HausdorffReport:
    """Per-channel Hausdorff distances between two recordings."""
    pos, pp = _hausdorff_pair(positions(reference), positions(executed), "euclidean")
    ori, po = _hausdorff_pair(orientations(reference), orientations(executed), "angular")
    grp, pg = _hausdorff_pair(gripper_widths(reference), gripper_widths(executed), "euclidean")
    return HausdorffReport(pos, ori, grp, {"position": pp, "orientation": po, "gripper": pg})


# -- dynamic time warping -----------------------------------------------


@dataclass(frozen=True)
class DtwReport:
    path: np.ndarray
    """(L, 2) int array of (i, j) pairs from (0, 0) to (n-1, m-1)."""
    total_cost: float
    linear_fit: tuple[float, float, float]
    """(slope, intercept, r_squared) of j regressed on i along the path."""

    def as_dict(self, with_path: bool = False) -> dict:
        slope, intercept, r2 = self.linear_fit
        out = {
            "total_cost": self.total_cost,
            "slope": slope,
            "intercept": intercept,
            "r_squared": r2,
            "path_length": int(len(self.path)),
        }
        if with_path:
            out["path"] = self.path.tolist()
        return out


def _pairwise(A: np.ndarray, B: np.ndarray, metric: Metric) -> np.ndarray:
    """Row-aligned distances d(A[k], B[k])."""
    if metric == "euclidean":
        return np.sqrt(((A - B) ** 2).sum(axis=1))
    if metric == "angular":
        return _angles(A, B)
    return np.array([metric(a, b) for a, b in zip(A, B)], dtype=float)


def linear_fit(path: np.ndarray) -> tuple[float, float, float]:
    i = path[:, 0].astype(float)
    j = path[:, 1].astype(float)
    di = i - i.mean()
    dj = j - j.mean()
    sxx = float(di @ di)
    if sxx == 0.0:
        return math.nan, math.nan, math.nan
    slope = float(di @ dj) / sxx
    intercept = float(j.mean() - slope * i.mean())
    syy = float(dj @ dj)
    if syy == 0.0:
        return slope, intercept, 1.0
    resid = dj - slope * di
    return slope, intercept, 1.0 - float(resid @ resid) / syy


def dtw_mapping(X, Y, d_f: Metric = "euclidean") -> DtwReport:
    """Dynamic time warping with steps (1,0), (0,1), (1,1).

    Each cell takes the cheapest predecessor, preferring the diagonal on
    ties and then (1,0).  The DP sweeps anti-diagonals so only step
    directions are kept for the full grid.
    """
    if callable(d_f):
        A = np.asarray(list(X), dtype=object) if not isinstance(X, np.ndarray) else X
        B = np.asarray(list(Y), dtype=object) if not isinstance(Y, np.ndarray) else Y
        if len(A) == 0 or len(B) == 0:
            raise ValueError("sequences must be non-empty")
    else:
        A, B = _as_points(X, d_f), _as_points(Y, d_f)
    n, m = len(A), len(B)
    inf = math.inf
    prev2 = np.full(n, inf)
    prev1 = np.full(n, inf)
    dirs = np.zeros((n, m), dtype=np.int8)  # 0 diagonal, 1 step in i, 2 step in j
    for k in range(n + m - 1):
        lo, hi = max(0, k - m + 1), min(k, n - 1)
        ii = np.arange(lo, hi + 1)
        jj = k - ii
        cost = _pairwise(A[ii], B[jj], d_f)
        cur = np.full(n, inf)
        if k == 0:
            cur[0] = cost[0]
        else:
            diag = np.full(len(ii), inf)
            up = np.full(len(ii), inf)
            has_i = ii >= 1
            diag[has_i] = prev2[ii[has_i] - 1]
            up[has_i] = prev1[ii[has_i] - 1]
            left = np.where(jj >= 1, prev1[ii], inf)
            best_side = np.minimum(up, left)
            choice = np.where(diag <= best_side, 0, np.where(up <= left, 1, 2)).astype(np.int8)
            best = np.where(choice == 0, diag, best_side)
            cur[ii] = cost + best
            dirs[ii, jj] = choice
        prev2, prev1 = prev1, cur
    total = float(prev1[n - 1])
    path = []
    i, j = n - 1, m - 1
    while True:
        path.append((i, j))
        if i == 0 and j == 0:
            break
        d = dirs[i, j]
        if d == 0:
            i, j = i - 1, j - 1
        elif d == 1:
            i -= 1
        else:
            j -= 1
    arr = np.array(path[::-1], dtype=int)
    return DtwReport(arr, total, linear_fit(arr))


# -- jig synchronization -------------------------------------------------


@dataclass(frozen=True)
class SyncRecord:
    jig: str
    transition: tuple[str, str]
    command: str
    demo_index: int
    demo_position: tuple[float, float, float]
    exec_position: tuple[float, float, float]
    distance: float

    def as_dict(self) -> dict:
        return {
            "jig": self.jig,
            "from": self.transition[0],
            "to": self.transition[1],
            "command": self.command,
            "demo_index": self.demo_index,
            "demo_position": list(self.demo_position),
            "exec_position": list(self.exec_position),
            "distance_m": self.distance,
        }


def demo_transitions(demo: Demonstration) -> dict[str, list[tuple[int, str, str]]]:
    """Commanded jig transitions per jig as (index, from, to).

    Changes that a timer produces on its own (tip-ejector return) are left
    out: the robot never commands them.
    """
    out: dict[str, list[tuple[int, str, str]]] = {j: [] for j in demo.registry}
    pts = demo.points
    for n in range(1, len(pts)):
        a, b = pts[n - 1].jig_state, pts[n].jig_state
        if a is b or a == b:
            continue
        for jig in demo.registry:
            s0, s1 = a[jig], b[jig]
            if s0 == s1:
                continue
            rule = demo.registry[jig].timer_from(s0)
            if rule is not None and rule.target == s1:
                continue
            out[jig].append((n, s0, s1))
    return out


def jig_sync_error(demo: Demonstration, executed: Trajectory) -> list[SyncRecord]:
    """Pair the k-th demonstrated transition of each jig with the k-th executed command."""
    if list(demo.registry) != list(executed.registry):
        raise ValueError("demonstration and trajectory use different jig registries")
    demo_tr = demo_transitions(demo)
    exec_ev: dict[str, list] = {j: [] for j in demo.registry}
    for ev in executed.jig_events:
        exec_ev[ev.jig].append(ev)
    bad = {j: (len(demo_tr[j]), len(exec_ev[j])) for j in demo.registry
           if len(demo_tr[j]) != len(exec_ev[j])}
    if bad:
        raise SyncMismatch(bad)
    out = []
    for jig in demo.registry:
        for (n, s0, s1), ev in zip(demo_tr[jig], exec_ev[jig]):
            dp = demo.points[n].pose.position
            ep = ev.pose.position
            out.append(SyncRecord(jig, (s0, s1), ev.command, n, dp, ep, math.dist(dp, ep)))
    out.sort(key=lambda r: (r.demo_index, r.jig))
    return out


# -- execution statistics -------------------------------------------------


@dataclass(frozen=True)
class ExecutionReport:
    success: bool
    demo_duration_s: float
    exec_duration_s: float
    """mean over trials"""
    exec_duration_std_s: float
    ratio: float
    trials: list = field(default_factory=list)

    @property
    def success_count(self) -> int:
        return sum(1 for t in self.trials if t["success"])

    def as_dict(self) -> dict:
        return {
            "success": self.success,
            "success_count": self.success_count,
            "trial_count": len(self.trials),
            "demo_duration_s": self.demo_duration_s,
            "exec_duration_s": self.exec_duration_s,
            "exec_duration_std_s": self.exec_duration_std_s,
            "ratio": self.ratio,
            "trials": list(self.trials),
        }


def execution_stats(
    demo: Demonstration,
    execs: Sequence[Optional[Trajectory]],
    successes: Optional[Sequence[bool]] = None,
) -> ExecutionReport:
    """Durations, their ratio to the demonstration, and overall success.

    A ``None`` entry in ``execs`` is a trial that aborted.
    """
    if successes is None:
        successes = [e is not None for e in execs]
    trials = []
    durations = []
    for k, (e, ok) in enumerate(zip(execs, successes), 1):
        d = e.duration if e is not None else None
        if d is not None and ok:
            durations.append(d)
        trials.append({"trial": k, "success": bool(ok), "duration_s": d})
    demo_d = demo.duration
    mean = statistics.fmean(durations) if durations else math.nan
    std = statistics.stdev(durations) if len(durations) > 1 else 0.0
    ratio = mean / demo_d if demo_d > 0 and durations else math.nan
    return ExecutionReport(bool(trials) and all(successes), demo_d, mean, std, ratio, trials)
