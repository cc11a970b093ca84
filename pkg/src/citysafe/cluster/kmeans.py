from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import ParameterError
from ._base import Clustering, KMeansParams, PointSet


def _sse(X: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    diff = X - centroids[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _means(X: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=k).astype(float)
    out = np.empty((k, X.shape[1]))
    for dim in range(X.shape[1]):
        out[:, dim] = np.bincount(labels, weights=X[:, dim], minlength=k) / counts
    return out


def lloyd(X: np.ndarray, centroids: np.ndarray, max_iter: int) -> tuple[np.ndarray, np.ndarray, list[float], int]:
    """Run Lloyd iterations from ``centroids``.

    Returns labels, centroids, the SSE after every update step, and the
    number of iterations performed. An emptied cluster takes over the
    point lying farthest from its own centroid.
    """
    n, k = len(X), len(centroids)
    rows = np.arange(n)
    labels: np.ndarray | None = None
    history: list[float] = []
    for _ in range(max_iter):
        d2 = cdist(X, centroids, "sqeuclidean")
        new = np.argmin(d2, axis=1)
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            own = d2[rows, new]
            own = np.where(counts[new] > 1, own, -1.0)
            i = int(np.argmax(own))
            counts[new[i]] -= 1
            new[i] = j
            counts[j] = 1
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centroids = _means(X, labels, k)
        history.append(_sse(X, centroids, labels))
    assert labels is not None
    return labels, centroids, history, len(history)


def kmeans(ps: PointSet, p: KMeansParams) -> Clustering:
    X = ps.points
    distinct = np.unique(X, axis=0)
    if p.k > len(distinct):
        raise ParameterError(f"k={p.k} exceeds the {len(distinct)} distinct points")

    rng = np.random.default_rng(p.seed)
    best = None
    for _ in range(p.n_init):
        start = distinct[np.sort(rng.choice(len(distinct), size=p.k, replace=False))]
        labels, centroids, history, n_iter = lloyd(X, start.copy(), p.max_iter)
        sse = history[-1]
        if best is None or sse < best[3]:
            best = (labels, centroids, history, sse, n_iter)

    labels, centroids, history, sse, n_iter = best
    return Clustering(
        labels,
        p,
        info={"centroids": centroids.tolist(), "sse": sse, "sse_history": history, "n_iter": n_iter},
    )
