"""Dynamic time warping kernels shared by alignment and metrics.

Classic symmetric step pattern {(1,0),(0,1),(1,1)}; ties on the backtrack
prefer the diagonal step so paths are deterministic.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .errors import EmptySequence


@njit(cache=True)
def _cost_matrix(a, b, squared):
    n, m = a.shape[0], b.shape[0]
    cost = np.full((n + 1, m + 1), np.inf)
    cost[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d = a[i - 1] - b[j - 1]
            c = d * d if squared else abs(d)
            best = cost[i - 1, j - 1]
            if cost[i - 1, j] < best:
                best = cost[i - 1, j]
            if cost[i, j - 1] < best:
                best = cost[i, j - 1]
            cost[i, j] = c + best
    return cost


def dtw_distance(a, b, squared: bool = False) -> float:
    """Minimal warping cost between two sequences."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySequence("dtw_distance needs non-empty sequences")
    return float(_cost_matrix(a, b, squared)[a.size, b.size])


def dtw_path(a, b, squared: bool = True) -> list[tuple[int, int]]:
    """Optimal warping path as (index into a, index into b) pairs."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySequence("dtw_path needs non-empty sequences")
    cost = _cost_matrix(a, b, squared)
    i, j = a.size, b.size
    path = [(i - 1, j - 1)]
    while i > 1 or j > 1:
        if i == 1:
            j -= 1
        elif j == 1:
            i -= 1
        else:
            diag, up, left = cost[i - 1, j - 1], cost[i - 1, j], cost[i, j - 1]
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        path.append((i - 1, j - 1))
    path.reverse()
    return path


def pairwise_dtw(signals: np.ndarray, squared: bool = True) -> np.ndarray:
    """Symmetric DTW distance matrix over rows of `signals`."""
    n = signals.shape[0]
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = dtw_distance(signals[i], signals[j], squared=squared)
    return dist
