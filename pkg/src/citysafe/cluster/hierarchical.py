"""Agglomerative clustering with Lance-Williams distance updates.

Ward linkage runs on squared Euclidean distances (the update rule is exact
there) and reports merge heights as their square roots. Memory is O(n^2).
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from ._base import AgglomerativeParams, Clustering, PointSet, pairwise, relabel


def _lance_williams(linkage: str, d_ki, d_kj, d_ij, n_i, n_j, n_k):
    if linkage == "complete":
        return np.maximum(d_ki, d_kj)
    if linkage == "average":
        return (n_i * d_ki + n_j * d_kj) / (n_i + n_j)
    # ward
    return ((n_k + n_i) * d_ki + (n_k + n_j) * d_kj - n_k * d_ij) / (n_i + n_j + n_k)


def merge_sequence(X: np.ndarray, linkage: str, stop_at: int = 1):
    """Merge until ``stop_at`` clusters remain.

    Returns ``(owner, merges)`` where ``owner[p]`` is the surviving cluster
    id (row index) of point ``p`` and each merge is ``(i, j, height, size)``.
    The pair with the smallest distance merges first; exact ties go to the
    lexicographically smallest ``(i, j)``. The merged cluster keeps id ``i``.
    """
    n = len(X)
    D = pairwise(X, X)
    if linkage == "ward":
        D = D * D
    np.fill_diagonal(D, np.inf)
    active = np.ones(n, dtype=bool)
    size = np.ones(n)
    owner = np.arange(n)
    rowmin = D.min(axis=1) if n else np.empty(0)
    rowarg = D.argmin(axis=1) if n else np.empty(0, dtype=int)
    merges = []

    with np.errstate(invalid="ignore"):
        for _ in range(n - stop_at):
            i = int(np.argmin(rowmin))
            j = int(rowarg[i])
            if j < i:  # cannot happen with exact ties resolved by argmin, kept as a guard
                i, j = j, i
            d_ij = D[i, j]
            new = _lance_williams(linkage, D[i], D[j], d_ij, size[i], size[j], size)
            active[j] = False
            new[~active] = np.inf
            new[i] = np.inf
            D[i, :] = new
            D[:, i] = new
            D[j, :] = np.inf
            D[:, j] = np.inf
            size[i] += size[j]
            owner[owner == j] = i
            merges.append((i, j, float(np.sqrt(d_ij)) if linkage == "ward" else float(d_ij), int(size[i])))

            rowmin[j] = np.inf
            rowmin[i] = D[i].min()
            rowarg[i] = D[i].argmin()
            stale = active & ((rowarg == i) | (rowarg == j))
            stale[i] = False
            for k in np.flatnonzero(stale):
                rowmin[k] = D[k].min()
                rowarg[k] = D[k].argmin()
            better = active & ~stale & ((new < rowmin) | ((new == rowmin) & (rowarg > i)))
            better[i] = False
            rowmin[better] = new[better]
            rowarg[better] = i
    return owner, merges


def agglomerative(ps: PointSet, p: AgglomerativeParams) -> Clustering:
    n = len(ps)
    if p.n_clusters > n:
        raise ParameterError(f"n_clusters={p.n_clusters} exceeds the {n} points")
    owner, merges = merge_sequence(ps.points, p.linkage, stop_at=p.n_clusters)
    return Clustering(relabel(owner), p, info={"merges": merges})
