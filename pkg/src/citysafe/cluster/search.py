"""Silhouette-driven hyperparameter grid search."""

from __future__ import annotations

import itertools
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

from ..errors import NoValidClusteringError, ParameterError, UndefinedScoreError
from ._base import Clustering, PointSet, make_params
from .clarans import clarans
from .density import dbscan, optics_cluster
from .grid import clique
from .hierarchical import agglomerative
from .kmeans import kmeans
from .silhouette import silhouette

ALGORITHMS: dict[str, Callable[..., Clustering]] = {
    "kmeans": kmeans,
    "clarans": clarans,
    "dbscan": dbscan,
    "optics": optics_cluster,
    "agglomerative": agglomerative,
    "agglo": agglomerative,
    "clique": clique,
}


def run_algorithm(ps: PointSet, params) -> Clustering:
    return ALGORITHMS[params.algorithm](ps, params)


def expand_grid(grid: Mapping[str, Sequence[Any]] | Sequence[Mapping[str, Any]]) -> list[dict[str, Any]]:
    """A dict of value lists becomes its cartesian product (first key varies
    slowest); a list of dicts is taken as-is."""
    if isinstance(grid, Mapping):
        keys = list(grid)
        values = [v if isinstance(v, (list, tuple, range)) else [v] for v in grid.values()]
        return [dict(zip(keys, combo)) for combo in itertools.product(*values)]
    return [dict(g) for g in grid]


@dataclass
class GridSearchResult:
    best: Clustering
    best_index: int
    table: list[dict[str, Any]]


def _evaluate(job: tuple) -> tuple[Clustering | None, dict[str, Any]]:
    ps, algorithm, index, combo, seed, sample_size = job
    row: dict[str, Any] = {"index": index, **combo, "silhouette": None, "n_clusters": None, "noise": None, "error": None}
    try:
        params = make_params(algorithm, **combo)
        if params.seeded:
            params = params.with_seed(seed ^ index)
            row["seed"] = params.seed
        result = run_algorithm(ps, params)
    except ParameterError as exc:
        row["error"] = str(exc)
        return None, row
    row["n_clusters"] = result.n_clusters_found
    row["noise"] = result.noise_count
    try:
        result.silhouette = silhouette(ps, result.labels, getattr(params, "metric", "euclidean"), sample_size, seed)
        row["silhouette"] = result.silhouette
    except UndefinedScoreError as exc:
        row["error"] = str(exc)
    return result, row


def grid_search(
    ps: PointSet,
    algorithm: str,
    grid,
    seed: int = 0,
    n_jobs: int = 1,
    silhouette_sample: int | None = None,
) -> GridSearchResult:
    """Score every grid point by silhouette and keep the best.

    Seeded algorithms get ``seed XOR grid_index`` per grid point, so serial
    and parallel runs agree. Ties go to the earliest grid point; grid points
    whose score is undefined are recorded with a null score.
    """
    if algorithm not in ALGORITHMS:
        raise ParameterError(f"unknown algorithm {algorithm!r}")
    combos = expand_grid(grid)
    if not combos:
        raise ParameterError("empty parameter grid")
    jobs = [(ps, algorithm, i, combo, seed, silhouette_sample) for i, combo in enumerate(combos)]

    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_evaluate, jobs))
    else:
        results = [_evaluate(j) for j in jobs]

    best_i = None
    for i, (res, row) in enumerate(results):
        score = row["silhouette"]
        if score is not None and (best_i is None or score > results[best_i][1]["silhouette"]):
            best_i = i
    if best_i is None:
        raise NoValidClusteringError(f"{algorithm}: no grid point produced a defined silhouette score")
    return GridSearchResult(results[best_i][0], best_i, [row for _, row in results])
