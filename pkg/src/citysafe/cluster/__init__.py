"""Spatial clustering of point records on raw lat/lon degrees."""

from ._base import (
    NOISE,
    AgglomerativeParams,
    ClaransParams,
    CliqueParams,
    Clustering,
    DBSCANParams,
    KMeansParams,
    OPTICSParams,
    PointSet,
    make_params,
    pairwise,
    relabel,
)
from .clarans import clarans
from .density import OpticsOrdering, dbscan, optics, optics_cluster, optics_extract
from .grid import clique
from .hierarchical import agglomerative, merge_sequence
from .kmeans import kmeans
from .search import ALGORITHMS, GridSearchResult, expand_grid, grid_search, run_algorithm
from .silhouette import silhouette, silhouette_samples

__all__ = [
    "NOISE",
    "ALGORITHMS",
    "AgglomerativeParams",
    "ClaransParams",
    "CliqueParams",
    "Clustering",
    "DBSCANParams",
    "GridSearchResult",
    "KMeansParams",
    "OPTICSParams",
    "OpticsOrdering",
    "PointSet",
    "agglomerative",
    "clarans",
    "clique",
    "dbscan",
    "expand_grid",
    "grid_search",
    "kmeans",
    "make_params",
    "merge_sequence",
    "optics",
    "optics_cluster",
    "optics_extract",
    "pairwise",
    "relabel",
    "run_algorithm",
    "silhouette",
    "silhouette_samples",
]
