from __future__ import annotations

import numpy as np

from ..errors import UndefinedScoreError
from ._base import NOISE, PointSet, pairwise

_CHUNK = 1024


def silhouette_samples(points, labels, metric: str = "euclidean") -> np.ndarray:
    """Per-point silhouette values for the non-noise points, in input order.

    Points in singleton clusters score 0.
    """
    X = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    if len(labels) != len(X):
        raise ValueError(f"{len(labels)} labels for {len(X)} points")
    keep = labels != NOISE
    X, labels = X[keep], labels[keep]
    if len(X) < 2:
        raise UndefinedScoreError("silhouette needs at least 2 non-noise points")
    uniq, inv = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise UndefinedScoreError("silhouette needs at least 2 clusters")

    # sort by cluster so per-cluster distance sums are contiguous reductions
    order = np.argsort(inv, kind="stable")
    Xs, inv_s = X[order], inv[order]
    sizes = np.bincount(inv_s).astype(float)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.int64)

    s = np.empty(len(Xs))
    for lo in range(0, len(Xs), _CHUNK):
        hi = min(lo + _CHUNK, len(Xs))
        sums = np.add.reduceat(pairwise(Xs[lo:hi], Xs, metric), starts, axis=1)
        own = inv_s[lo:hi]
        rows = np.arange(hi - lo)
        own_size = sizes[own]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = sums[rows, own] / (own_size - 1)
            mean_other = sums / sizes
        mean_other[rows, own] = np.inf
        b = mean_other.min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (b - a) / denom
        val[(own_size == 1) | (denom == 0)] = 0.0
        s[lo:hi] = val

    out = np.empty(len(Xs))
    out[order] = s
    return out


def silhouette(
    points,
    labels,
    metric: str = "euclidean",
    sample_size: int | None = None,
    seed: int = 0,
) -> float:
    """Mean silhouette over non-noise points.

    With ``sample_size`` set, only a seeded random subset of that many
    points is scored, against each other. Meant for very large inputs.
    """
    X = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    if sample_size is not None and sample_size < len(X):
        idx = np.sort(np.random.default_rng(seed).choice(len(X), size=sample_size, replace=False))
        X, labels = X[idx], labels[idx]
    return float(np.mean(silhouette_samples(X, labels, metric)))
