"""Randomised k-medoid search over the graph of medoid sets.

Each node is a set of ``k`` medoids; neighbours differ by one swapped
medoid. A local search moves to the first cheaper neighbour it samples and
stops after ``maxneighbor`` consecutive failures; ``numlocal`` independent
searches are run and the cheapest end node is kept.
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from ._base import Clustering, ClaransParams, PointSet, pairwise, relabel


class _Node:
    """Medoid set with cached nearest / second-nearest medoid distances."""

    def __init__(self, X: np.ndarray, medoids: np.ndarray, metric: str):
        self.X = X
        self.metric = metric
        self.medoids = np.array(medoids)
        self.dist = pairwise(X, X[self.medoids], metric)
        self._refresh()

    def _refresh(self) -> None:
        n = len(self.X)
        if self.dist.shape[1] == 1:
            self.nearest = np.zeros(n, dtype=int)
            self.d1 = self.dist[:, 0]
            self.d2 = np.full(n, np.inf)
        else:
            part = np.argsort(self.dist, axis=1, kind="stable")[:, :2]
            rows = np.arange(n)
            self.nearest = part[:, 0]
            self.d1 = self.dist[rows, part[:, 0]]
            self.d2 = self.dist[rows, part[:, 1]]
        self.cost = float(self.d1.sum())

    def swap_cost(self, slot: int, candidate: int) -> tuple[float, np.ndarray]:
        col = pairwise(self.X, self.X[candidate : candidate + 1], self.metric)[:, 0]
        others = np.where(self.nearest == slot, self.d2, self.d1)
        return float(np.minimum(col, others).sum()), col

    def apply(self, slot: int, candidate: int, col: np.ndarray) -> None:
        self.medoids[slot] = candidate
        self.dist[:, slot] = col
        self._refresh()


def _neighbour_stream(rng: np.random.Generator, size: int, limit: int):
    """Distinct neighbour indices in random order (at most ``limit``)."""
    if 2 * limit >= size:
        yield from rng.permutation(size)[:limit].tolist()
        return
    seen: set[int] = set()
    while len(seen) < limit:
        r = int(rng.integers(size))
        if r not in seen:
            seen.add(r)
            yield r


def clarans(ps: PointSet, p: ClaransParams) -> Clustering:
    X = ps.points
    n, k = len(X), p.k
    if k > n:
        raise ParameterError(f"k={k} exceeds the {n} points")
    maxneighbor = p.resolved_maxneighbor(n)
    rng = np.random.default_rng(p.seed)
    n_swap = n - k
    size = k * n_swap

    best: _Node | None = None
    restarts = []
    for _ in range(p.numlocal):
        node = _Node(X, rng.choice(n, size=k, replace=False), p.metric)
        trace = [node.cost]
        while True:
            moved = False
            if size:
                nonmed = np.setdiff1d(np.arange(n), node.medoids)
                for r in _neighbour_stream(rng, size, min(maxneighbor, size)):
                    slot, cand = divmod(r, n_swap)
                    cost, col = node.swap_cost(slot, int(nonmed[cand]))
                    if cost < node.cost:
                        node.apply(slot, int(nonmed[cand]), col)
                        trace.append(node.cost)
                        moved = True
                        break
            if not moved:
                break
        restarts.append({"initial_cost": trace[0], "cost": node.cost, "accepted_costs": trace})
        if best is None or node.cost < best.cost:
            best = node

    assert best is not None
    labels = relabel(best.nearest)
    order = [int(best.medoids[s]) for s in dict.fromkeys(best.nearest.tolist())]
    return Clustering(
        labels,
        p,
        info={
            "cost": best.cost,
            "medoids": order,
            "medoid_ids": [ps.ids[i] for i in order],
            "maxneighbor": maxneighbor,
            "restarts": restarts,
        },
    )
