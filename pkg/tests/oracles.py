"""Independent reference implementations used by the tests.

Plain Python, no numpy, written for obviousness rather than speed.
"""

from __future__ import annotations

import math
from functools import lru_cache


def euclid(a, b) -> float:
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def quat_angle(a, b) -> float:
    d = abs(sum(float(x) * float(y) for x, y in zip(a, b)))
    return 2.0 * math.acos(min(1.0, d))


def directed(A, B, d=euclid) -> float:
    best = 0.0
    for a in A:
        nearest = min(d(a, b) for b in B)
        if nearest > best:
            best = nearest
    return best


def hausdorff(A, B, d=euclid) -> float:
    return max(directed(A, B, d), directed(B, A, d))


def all_monotone_paths(n: int, m: int):
    """Every path from (0, 0) to (n-1, m-1) with steps (1,0), (0,1), (1,1)."""
    def rec(i, j):
        if (i, j) == (n - 1, m - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            a, b = i + di, j + dj
            if a < n and b < m:
                for tail in rec(a, b):
                    yield [(i, j)] + tail
    yield from rec(0, 0)


def dtw_bruteforce(X, Y, d=euclid) -> float:
    return min(sum(d(X[i], Y[j]) for i, j in p) for p in all_monotone_paths(len(X), len(Y)))


def delannoy(n: int, m: int) -> int:
    """Number of monotone paths on an n x m grid (a check on the enumerator)."""
    @lru_cache(maxsize=None)
    def D(a, b):
        if a == 0 or b == 0:
            return 1
        return D(a - 1, b) + D(a, b - 1) + D(a - 1, b - 1)
    return D(n - 1, m - 1)


def fsm_shortest_commands(definition, start_node: int) -> dict[str, int]:
    """Fewest commands from ``start_node`` to every reachable visible state.

    Breadth-first search over the compiled node graph, commands only.
    """
    dist = {start_node: 0}
    frontier = [start_node]
    while frontier:
        nxt = []
        for node in frontier:
            for cmd in definition.commands:
                tgt = definition._cmd_edges.get((node, cmd))
                if tgt is not None and tgt not in dist:
                    dist[tgt] = dist[node] + 1
                    nxt.append(tgt)
        frontier = nxt
    out: dict[str, int] = {}
    for node, k in dist.items():
        name = definition.nodes[node]
        out[name] = min(k, out.get(name, k))
    return out


def hausdorff_dense(A, B) -> float:
    """Euclidean Hausdorff from the full pairwise distance matrix (numpy)."""
    import numpy as np

    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    D = np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2))
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))
