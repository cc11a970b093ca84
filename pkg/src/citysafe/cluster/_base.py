from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from typing import Any, ClassVar

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import ParameterError
from ..ingest import Dataset

NOISE = -1
METRICS = ("euclidean", "haversine")
EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True, eq=False)
class PointSet:
    """2-D coordinates ``(latitude, longitude)`` in degrees with stable ids."""

    points: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2) if len(self.points) else np.empty((0, 2))
        if not np.all(np.isfinite(pts)):
            raise ParameterError("point coordinates must be finite")
        pts.setflags(write=False)
        ids = tuple(self.ids) if len(self.ids) else tuple(range(len(pts)))
        if len(ids) != len(pts):
            raise ParameterError(f"{len(ids)} ids for {len(pts)} points")
        if len(set(ids)) != len(ids):
            raise ParameterError("point ids must be unique")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_dataset(
        cls,
        d: Dataset,
        lat_column: str = "latitude",
        lon_column: str = "longitude",
        id_column: str | None = None,
    ) -> PointSet:
        """Rows with a null coordinate are skipped; ids default to row index."""
        lats, lons = d.column(lat_column), d.column(lon_column)
        ids = d.column(id_column) if id_column else list(range(len(d)))
        keep = [i for i, (a, b) in enumerate(zip(lats, lons)) if a is not None and b is not None]
        pts = np.array([(float(lats[i]), float(lons[i])) for i in keep], dtype=float).reshape(-1, 2)
        return cls(pts, tuple(ids[i] for i in keep))


def check_metric(metric: str) -> str:
    if metric not in METRICS:
        raise ParameterError(f"unknown metric {metric!r}; expected one of {METRICS}")
    return metric


def haversine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Great-circle distance in km between rows of ``a`` and ``b`` (lat, lon degrees)."""
    la1, lo1 = np.radians(a[:, 0])[:, None], np.radians(a[:, 1])[:, None]
    la2, lo2 = np.radians(b[:, 0])[None, :], np.radians(b[:, 1])[None, :]
    h = np.sin((la2 - la1) / 2) ** 2 + np.cos(la1) * np.cos(la2) * np.sin((lo2 - lo1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def pairwise(a: np.ndarray, b: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    if metric == "euclidean":
        return cdist(a, b)
    if metric == "haversine":
        return haversine(a, b)
    raise ParameterError(f"unknown metric {metric!r}")


def relabel(labels: Sequence[int] | np.ndarray) -> np.ndarray:
    """Renumber non-noise labels 0, 1, ... in order of first appearance."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.full(labels.shape, NOISE, dtype=np.int64)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels.tolist()):
        if lab == NOISE:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def n_clusters(labels: np.ndarray) -> int:
    labs = np.asarray(labels)
    return int(len(np.unique(labs[labs != NOISE])))


# ---------------------------------------------------------------------------
# parameters


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ParameterError(msg)


@dataclass(frozen=True)
class _Params:
    algorithm: ClassVar[str] = ""
    seeded: ClassVar[bool] = False

    def to_dict(self) -> dict[str, Any]:
        return {"algorithm": self.algorithm, **asdict(self)}

    def with_seed(self, seed: int):
        return replace(self, seed=seed) if self.seeded else self


@dataclass(frozen=True)
class KMeansParams(_Params):
    k: int
    max_iter: int = 100
    seed: int = 0
    n_init: int = 1
    algorithm: ClassVar[str] = "kmeans"
    seeded: ClassVar[bool] = True

    def __post_init__(self):
        _require(self.k >= 1, "k must be >= 1")
        _require(self.max_iter >= 1, "max_iter must be >= 1")
        _require(self.n_init >= 1, "n_init must be >= 1")

    @classmethod
    def fast_preset(cls, k: int) -> KMeansParams:
        """Five iterations, random state 0, a single centroid seeding."""
        return cls(k=k, max_iter=5, seed=0, n_init=1)


@dataclass(frozen=True)
class ClaransParams(_Params):
    k: int
    numlocal: int = 2
    maxneighbor: int | None = None
    seed: int = 0
    metric: str = "euclidean"
    algorithm: ClassVar[str] = "clarans"
    seeded: ClassVar[bool] = True

    def __post_init__(self):
        _require(self.k >= 1, "k must be >= 1")
        _require(self.numlocal >= 1, "numlocal must be >= 1")
        _require(self.maxneighbor is None or self.maxneighbor >= 0, "maxneighbor must be >= 0")
        check_metric(self.metric)

    def resolved_maxneighbor(self, n: int) -> int:
        if self.maxneighbor is not None:
            return self.maxneighbor
        # 1.25% of the neighbour count, at least 250
        return max(250, math.ceil(0.0125 * self.k * (n - self.k)))


@dataclass(frozen=True)
class DBSCANParams(_Params):
    eps: float
    min_pts: int = 5
    metric: str = "euclidean"
    algorithm: ClassVar[str] = "dbscan"

    def __post_init__(self):
        _require(self.eps > 0, "eps must be > 0")
        _require(self.min_pts >= 1, "min_pts must be >= 1")
        check_metric(self.metric)


@dataclass(frozen=True)
class OPTICSParams(_Params):
    eps: float
    min_pts: int = 5
    extraction_eps: float | None = None
    metric: str = "euclidean"
    algorithm: ClassVar[str] = "optics"

    def __post_init__(self):
        _require(self.eps >= 0, "eps must be >= 0")
        _require(self.min_pts >= 1, "min_pts must be >= 1")
        _require(self.extraction_eps is None or self.extraction_eps > 0, "extraction_eps must be > 0")
        check_metric(self.metric)


LINKAGES = ("ward", "complete", "average")


@dataclass(frozen=True)
class AgglomerativeParams(_Params):
    n_clusters: int
    linkage: str = "ward"
    algorithm: ClassVar[str] = "agglomerative"

    def __post_init__(self):
        _require(self.n_clusters >= 1, "n_clusters must be >= 1")
        _require(self.linkage in LINKAGES, f"linkage must be one of {LINKAGES}")


@dataclass(frozen=True)
class CliqueParams(_Params):
    intervals: int
    threshold: float = 0
    algorithm: ClassVar[str] = "clique"

    def __post_init__(self):
        _require(self.intervals >= 1, "intervals must be >= 1")
        _require(self.threshold >= 0, "threshold must be >= 0")


PARAM_TYPES: dict[str, type[_Params]] = {
    p.algorithm: p for p in (KMeansParams, ClaransParams, DBSCANParams, OPTICSParams, AgglomerativeParams, CliqueParams)
}
PARAM_TYPES["agglo"] = AgglomerativeParams


def make_params(algorithm: str, **kwargs) -> _Params:
    try:
        cls = PARAM_TYPES[algorithm]
    except KeyError:
        raise ParameterError(f"unknown algorithm {algorithm!r}") from None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ParameterError(f"{algorithm}: {exc}") from exc


@dataclass
class Clustering:
    labels: np.ndarray
    params: _Params
    silhouette: float | None = None
    n_clusters_found: int = 0
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.n_clusters_found = n_clusters(self.labels)

    @property
    def noise_count(self) -> int:
        return int(np.count_nonzero(self.labels == NOISE))

    def summary(self) -> dict[str, Any]:
        return {
            **self.params.to_dict(),
            "n_clusters": self.n_clusters_found,
            "noise": self.noise_count,
            "silhouette": self.silhouette,
        }
