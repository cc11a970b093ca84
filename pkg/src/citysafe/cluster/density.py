"""DBSCAN and OPTICS.

A point's eps-neighbourhood includes the point itself, and a point is a
core point when that neighbourhood holds at least ``min_pts`` points.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import ParameterError
from ._base import NOISE, Clustering, DBSCANParams, OPTICSParams, PointSet, pairwise, relabel

_UNVISITED = -2
_CHUNK = 2048


def neighbourhoods(X: np.ndarray, eps: float, metric: str = "euclidean") -> list[np.ndarray]:
    """Sorted indices of all points within ``eps`` of each point."""
    if metric == "euclidean":
        tree = cKDTree(X)
        return [np.array(sorted(nb), dtype=np.int64) for nb in tree.query_ball_point(X, r=eps)]
    out = []
    for start in range(0, len(X), _CHUNK):
        d = pairwise(X[start : start + _CHUNK], X, metric)
        out.extend(np.flatnonzero(row <= eps) for row in d)
    return out


def dbscan(ps: PointSet, p: DBSCANParams) -> Clustering:
    X = ps.points
    n = len(X)
    neigh = neighbourhoods(X, p.eps, p.metric)
    core = np.array([len(nb) >= p.min_pts for nb in neigh], dtype=bool)

    labels = np.full(n, _UNVISITED, dtype=np.int64)
    cluster = -1
    for i in range(n):
        if labels[i] != _UNVISITED:
            continue
        if not core[i]:
            labels[i] = NOISE  # may still become a border point later
            continue
        cluster += 1
        labels[i] = cluster
        queue = deque(neigh[i].tolist())
        while queue:
            q = queue.popleft()
            if labels[q] == NOISE:
                labels[q] = cluster
                continue
            if labels[q] != _UNVISITED:
                continue
            labels[q] = cluster
            if core[q]:
                queue.extend(neigh[q].tolist())
    return Clustering(labels, p, info={"core": core.tolist()})


@dataclass(frozen=True)
class OpticsOrdering:
    """Cluster ordering; undefined distances are ``inf``.

    ``order[i]`` is the index (into the point set) of the i-th emitted
    point, with its reachability and core distances at the same position.
    """

    order: np.ndarray
    reachability: np.ndarray
    core_distance: np.ndarray
    ids: tuple
    params: OPTICSParams

    def __len__(self) -> int:
        return len(self.order)

    def rows(self) -> list[tuple]:
        return [
            (self.ids[i], _finite_or_none(r), _finite_or_none(c))
            for i, r, c in zip(self.order.tolist(), self.reachability.tolist(), self.core_distance.tolist())
        ]


def _finite_or_none(x: float) -> float | None:
    return None if not np.isfinite(x) else x


def optics(ps: PointSet, p: OPTICSParams) -> OpticsOrdering:
    X = ps.points
    n = len(X)
    neigh = neighbourhoods(X, p.eps, p.metric)
    dists = [pairwise(X[i : i + 1], X[nb], p.metric)[0] if len(nb) else np.empty(0) for i, nb in enumerate(neigh)]

    core = np.full(n, np.inf)
    for i, d in enumerate(dists):
        if len(d) >= p.min_pts:
            core[i] = np.partition(d, p.min_pts - 1)[p.min_pts - 1]

    reach = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    order: list[int] = []

    def expand(pt: int, seeds: list) -> None:
        for q, d in zip(neigh[pt].tolist(), dists[pt].tolist()):
            if done[q]:
                continue
            r = max(core[pt], d)
            if r < reach[q]:
                reach[q] = r
                heapq.heappush(seeds, (r, q))

    for start in range(n):
        if done[start]:
            continue
        done[start] = True
        order.append(start)
        if not np.isfinite(core[start]):
            continue
        seeds: list = []
        expand(start, seeds)
        while seeds:
            r, q = heapq.heappop(seeds)
            if done[q] or r > reach[q]:
                continue  # stale heap entry
            done[q] = True
            order.append(q)
            if np.isfinite(core[q]):
                expand(q, seeds)

    idx = np.array(order, dtype=np.int64)
    return OpticsOrdering(idx, reach[idx], core[idx], ps.ids, p)


def optics_extract(ordering: OpticsOrdering, extraction_eps: float) -> Clustering:
    """Flat clustering read off the ordering at radius ``extraction_eps``."""
    if not extraction_eps > 0:
        raise ParameterError("extraction_eps must be > 0")
    labels = np.full(len(ordering), NOISE, dtype=np.int64)
    current = NOISE
    next_id = 0
    for idx, r, c in zip(ordering.order.tolist(), ordering.reachability.tolist(), ordering.core_distance.tolist()):
        if r > extraction_eps:
            if c <= extraction_eps:
                current = next_id
                next_id += 1
                labels[idx] = current
            else:
                labels[idx] = NOISE
        else:
            labels[idx] = current
    params = ordering.params
    return Clustering(relabel(labels), params, info={"extraction_eps": extraction_eps})


def attach_borders(X: np.ndarray, ordering: OpticsOrdering, labels: np.ndarray, eps: float, metric: str) -> np.ndarray:
    """Give noise points within ``eps`` of a core point that point's cluster.

    A border point visited as a fresh start before any of its core
    neighbours keeps an infinite reachability and reads as noise, although
    DBSCAN would place it. The earliest core neighbour in the ordering wins.
    """
    out = labels.copy()
    n = len(X)
    core = np.empty(n)
    core[ordering.order] = ordering.core_distance
    pos = np.empty(n, dtype=np.int64)
    pos[ordering.order] = np.arange(n)
    is_core = core <= eps
    for i in np.flatnonzero(labels == NOISE):
        d = pairwise(X[i : i + 1], X, metric)[0]
        cand = np.flatnonzero((d <= eps) & is_core & (labels != NOISE))
        if len(cand):
            out[i] = labels[cand[np.argmin(pos[cand])]]
    return out


def optics_cluster(ps: PointSet, p: OPTICSParams) -> Clustering:
    ordering = optics(ps, p)
    eps = p.extraction_eps if p.extraction_eps is not None else p.eps
    result = optics_extract(ordering, eps)
    labels = attach_borders(ps.points, ordering, result.labels, eps, p.metric)
    result.info["borders_attached"] = int(np.count_nonzero(labels != result.labels))
    result.labels = relabel(labels)
    result.info["ordering"] = ordering.rows()
    return result
