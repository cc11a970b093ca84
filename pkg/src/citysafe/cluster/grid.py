"""Grid-density clustering: equal-width cells, dense cells joined across shared edges."""

from __future__ import annotations

from collections import deque

import numpy as np

from ._base import NOISE, Clustering, CliqueParams, PointSet


def cell_indices(X: np.ndarray, intervals: int) -> np.ndarray:
    """Cell coordinate of every point on an ``intervals``-per-axis grid.

    A point on an interior cell edge belongs to the higher cell; the global
    maximum closes the last cell.
    """
    X = np.asarray(X, dtype=float)
    out = np.zeros(X.shape, dtype=np.int64)
    if len(X) == 0:
        return out
    lo, hi = X.min(axis=0), X.max(axis=0)
    for dim in range(X.shape[1]):
        if hi[dim] == lo[dim]:
            continue
        edges = lo[dim] + (hi[dim] - lo[dim]) * np.arange(intervals + 1) / intervals
        idx = np.searchsorted(edges[1:-1], X[:, dim], side="right")
        out[:, dim] = np.clip(idx, 0, intervals - 1)
    return out


def clique(ps: PointSet, p: CliqueParams) -> Clustering:
    X = ps.points
    cells = cell_indices(X, p.intervals)
    if len(X) == 0:
        return Clustering(np.empty(0, dtype=np.int64), p)
    uniq, inverse, counts = np.unique(cells, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    dense = counts > p.threshold

    index = {tuple(c): i for i, c in enumerate(uniq.tolist())}
    comp = np.full(len(uniq), NOISE, dtype=np.int64)
    n_comp = 0
    ndim = uniq.shape[1]
    # cells come sorted lexicographically, so component ids do not depend on point order
    for start in range(len(uniq)):
        if not dense[start] or comp[start] != NOISE:
            continue
        comp[start] = n_comp
        queue = deque([start])
        while queue:
            c = uniq[queue.popleft()]
            for dim in range(ndim):
                for step in (-1, 1):
                    nb = c.copy()
                    nb[dim] += step
                    j = index.get(tuple(nb.tolist()))
                    if j is not None and dense[j] and comp[j] == NOISE:
                        comp[j] = n_comp
                        queue.append(j)
        n_comp += 1

    labels = comp[inverse]
    return Clustering(
        labels,
        p,
        info={"dense_cells": int(dense.sum()), "occupied_cells": int(len(uniq))},
    )
