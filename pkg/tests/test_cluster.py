import itertools

import numpy as np
import pytest

from citysafe.cluster import (
    NOISE,
    AgglomerativeParams,
    ClaransParams,
    CliqueParams,
    DBSCANParams,
    KMeansParams,
    OPTICSParams,
    PointSet,
    agglomerative,
    clarans,
    clique,
    dbscan,
    expand_grid,
    grid_search,
    kmeans,
    make_params,
    merge_sequence,
    optics,
    optics_cluster,
    optics_extract,
    relabel,
    silhouette,
    silhouette_samples,
)
from citysafe.cluster.kmeans import lloyd
from citysafe.errors import NoValidClusteringError, ParameterError, UndefinedScoreError
from oracles import dbscan_matches, kmedoid_optimum, same_partition, silhouette_direct

FOUR = PointSet([(0, 0), (0, 1), (10, 0), (10, 1)])
LINE = PointSet([(v, 0) for v in (0, 1, 2, 10, 11, 12)])


# --- shared plumbing -------------------------------------------------------


def test_pointset_validation():
    with pytest.raises(ParameterError):
        PointSet([(0, float("inf"))])
    with pytest.raises(ParameterError):
        PointSet([(0, 0), (1, 1)], ids=("a", "a"))
    assert PointSet([]).points.shape == (0, 2)


def test_points_are_read_only():
    with pytest.raises(ValueError):
        FOUR.points[0, 0] = 5


def test_relabel_first_appearance():
    assert relabel([5, 5, -1, 2, 5, 2]).tolist() == [0, 0, -1, 1, 0, 1]


def test_make_params():
    assert make_params("agglo", n_clusters=2).algorithm == "agglomerative"
    with pytest.raises(ParameterError):
        make_params("nope")
    with pytest.raises(ParameterError):
        make_params("dbscan", eps=0.1, bogus=1)
    with pytest.raises(ParameterError):
        DBSCANParams(eps=0)
    with pytest.raises(ParameterError):
        AgglomerativeParams(2, "single")


# --- k-means ---------------------------------------------------------------


def _sse(X, labels):
    return sum(((X[labels == c] - X[labels == c].mean(axis=0)) ** 2).sum() for c in np.unique(labels))


def test_kmeans_four_points():
    # every 2-partition of the 4 points, best by SSE
    X = FOUR.points
    best = min(
        (np.array(lab) for lab in itertools.product([0, 1], repeat=4) if len(set(lab)) == 2),
        key=lambda lab: _sse(X, lab),
    )
    res = kmeans(FOUR, KMeansParams(k=2, seed=0, n_init=10))
    assert same_partition(res.labels, best)
    cents = sorted(map(tuple, res.info["centroids"]))
    assert cents == [(0.0, 0.5), (10.0, 0.5)]


def test_kmeans_single_init_can_stop_in_local_optimum():
    # seed 0 samples (0,0),(0,1); the top/bottom split is a Lloyd fixed point
    res = kmeans(FOUR, KMeansParams(k=2, seed=0))
    assert res.info["sse"] == 100.0
    assert res.labels.tolist() == [0, 1, 0, 1]


def test_kmeans_k1_and_kn():
    r1 = kmeans(FOUR, KMeansParams(k=1))
    assert r1.info["centroids"] == [[5.0, 0.5]]
    rn = kmeans(FOUR, KMeansParams(k=4))
    assert rn.n_clusters_found == 4 and rn.info["sse"] == 0


def test_kmeans_k_exceeds_distinct_points():
    with pytest.raises(ParameterError):
        kmeans(PointSet([(0, 0), (0, 0), (1, 1)]), KMeansParams(k=3))


def test_kmeans_deterministic(three_blobs):
    a = kmeans(three_blobs, KMeansParams(k=4, seed=3))
    b = kmeans(three_blobs, KMeansParams(k=4, seed=3))
    assert np.array_equal(a.labels, b.labels)


def test_lloyd_reseeds_empty_cluster():
    X = np.array([[0.0, 0], [0.1, 0], [5, 0], [5.1, 0]])
    # the third centroid is far from every point and starts empty
    labels, cents, hist, _ = lloyd(X, np.array([[0.05, 0], [5.05, 0], [100.0, 100]]), 10)
    assert len(np.unique(labels)) == 3
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_fast_preset():
    p = KMeansParams.fast_preset(3)
    assert (p.max_iter, p.seed, p.n_init) == (5, 0, 1)


# --- CLARANS ---------------------------------------------------------------


TRIADS = PointSet([(0, 0), (0, 1), (1, 0), (20, 20), (20, 21), (21, 20)])


@pytest.mark.parametrize("seed", range(5))
def test_clarans_triads_optimal(seed):
    res = clarans(TRIADS, ClaransParams(k=2, numlocal=5, maxneighbor=20, seed=seed))
    assert res.info["cost"] == pytest.approx(kmedoid_optimum(TRIADS.points, 2))


def test_clarans_k_equals_n():
    assert clarans(TRIADS, ClaransParams(k=6)).info["cost"] == 0


def test_clarans_no_neighbours_keeps_initial_node():
    res = clarans(TRIADS, ClaransParams(k=2, numlocal=1, maxneighbor=0, seed=4))
    r = res.info["restarts"][0]
    assert r["cost"] == r["initial_cost"] == res.info["cost"]


def test_clarans_accepted_moves_strictly_decrease(three_blobs):
    res = clarans(three_blobs, ClaransParams(k=3, numlocal=3, seed=1))
    for r in res.info["restarts"]:
        costs = r["accepted_costs"]
        assert all(b < a for a, b in zip(costs, costs[1:]))
        assert r["cost"] <= r["initial_cost"]


def test_clarans_default_maxneighbor():
    assert ClaransParams(k=3).resolved_maxneighbor(100) == 250
    assert ClaransParams(k=10).resolved_maxneighbor(10_000) == 1249


def test_clarans_k_too_big():
    with pytest.raises(ParameterError):
        clarans(TRIADS, ClaransParams(k=7))


# --- DBSCAN / OPTICS -------------------------------------------------------


def test_dbscan_line_example():
    res = dbscan(LINE, DBSCANParams(eps=1.5, min_pts=2))
    assert res.labels.tolist() == [0, 0, 0, 1, 1, 1]


def test_dbscan_all_noise():
    res = dbscan(LINE, DBSCANParams(eps=0.5, min_pts=2))
    assert (res.labels == NOISE).all()


def test_dbscan_identical_points():
    ps = PointSet([(1, 1)] * 5, ids=range(5))
    assert dbscan(ps, DBSCANParams(eps=0.1, min_pts=5)).labels.tolist() == [0] * 5


def test_dbscan_border_goes_to_first_cluster():
    # 0.9 is within eps of both dense groups but has only 3 neighbours itself
    xs = [0, 0.05, 0.1, 0.15, 0.2, 1.6, 1.65, 1.7, 1.75, 1.8, 0.9]
    ps = PointSet([(0, x) for x in xs])
    res = dbscan(ps, DBSCANParams(eps=0.72, min_pts=4))
    assert res.labels.tolist() == [0] * 5 + [1] * 5 + [0]
    assert res.info["core"][-1] is False


@pytest.mark.parametrize("seed", range(10))
def test_dbscan_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(60, 2))
    res = dbscan(PointSet(X), DBSCANParams(eps=0.12, min_pts=4))
    assert dbscan_matches(res.labels, X, 0.12, 4)


def test_dbscan_haversine_metric():
    ps = PointSet([(51.0, -114.0), (51.0001, -114.0), (51.5, -114.0)])
    res = dbscan(ps, DBSCANParams(eps=0.5, min_pts=2, metric="haversine"))  # km
    assert res.labels.tolist() == [0, 0, NOISE]


def test_optics_first_point_undefined_reachability(two_blobs):
    o = optics(two_blobs, OPTICSParams(eps=1.0, min_pts=4))
    assert np.isinf(o.reachability[0])
    assert sorted(o.order.tolist()) == list(range(len(two_blobs)))


def test_optics_core_distance_hand_check():
    o = optics(PointSet([(0, 0), (1, 0), (2, 0)]), OPTICSParams(eps=10, min_pts=2))
    assert o.core_distance.tolist() == [1.0, 1.0, 1.0]


def test_optics_eps_zero():
    o = optics(LINE, OPTICSParams(eps=0, min_pts=2))
    assert np.isinf(o.core_distance).all() and np.isinf(o.reachability).all()


def test_optics_extract_extremes():
    o = optics(LINE, OPTICSParams(eps=100, min_pts=2))
    assert optics_extract(o, 1000).labels.tolist() == [0] * 6
    assert (optics_extract(o, 0.1).labels == NOISE).all()
    with pytest.raises(ParameterError):
        optics_extract(o, 0)


def test_optics_matches_dbscan_on_line():
    a = optics_cluster(LINE, OPTICSParams(eps=1.5, min_pts=2))
    b = dbscan(LINE, DBSCANParams(eps=1.5, min_pts=2))
    assert same_partition(a.labels, b.labels)


def test_optics_border_visited_first_is_attached():
    # point 0 is a border of the dense run and is the first start point
    ps = PointSet([(0, x) for x in (0, 1, 1.1, 1.2, 1.3)])
    p = OPTICSParams(eps=1.0, min_pts=3)
    raw = optics_extract(optics(ps, p), 1.0).labels
    assert raw[0] == NOISE
    fixed = optics_cluster(ps, p)
    assert fixed.labels.tolist() == dbscan(ps, DBSCANParams(eps=1.0, min_pts=3)).labels.tolist() == [0] * 5
    assert fixed.info["borders_attached"] == 1


def test_optics_rows_use_ids():
    ps = PointSet([(0, 0), (1, 0)], ids=("a", "b"))
    rows = optics(ps, OPTICSParams(eps=5, min_pts=2)).rows()
    assert rows[0] == ("a", None, 1.0)


# --- agglomerative ---------------------------------------------------------


def test_agglomerative_extremes():
    assert agglomerative(FOUR, AgglomerativeParams(4)).labels.tolist() == [0, 1, 2, 3]
    assert agglomerative(FOUR, AgglomerativeParams(1)).labels.tolist() == [0] * 4
    with pytest.raises(ParameterError):
        agglomerative(FOUR, AgglomerativeParams(5))


def test_complete_linkage_three_points():
    res = agglomerative(PointSet([(0, 0), (0, 1), (10, 0)]), AgglomerativeParams(2, "complete"))
    assert res.labels.tolist() == [0, 0, 1]
    assert res.info["merges"][0][:2] == (0, 1)


def test_ties_merge_smallest_pair():
    # d(0,1) == d(1,2) exactly
    X = np.array([[0.0, 0], [1, 0], [2, 0]])
    _, merges = merge_sequence(X, "average")
    assert merges[0][:2] == (0, 1)


@pytest.mark.parametrize("linkage", ["complete", "average", "ward"])
def test_merge_heights_monotone(linkage, three_blobs):
    _, merges = merge_sequence(three_blobs.points[::3], linkage)
    h = [m[2] for m in merges]
    assert all(b >= a - 1e-12 for a, b in zip(h, h[1:]))


def test_ward_matches_variance_increase():
    # merging two singletons at distance d costs d²/2; reported height is sqrt of twice that
    X = np.array([[0.0, 0.0], [3.0, 4.0], [100.0, 100.0]])
    _, merges = merge_sequence(X, "ward")
    assert merges[0][:2] == (0, 1)
    assert merges[0][2] == pytest.approx(5.0)


@pytest.mark.parametrize("linkage", ["complete", "average", "ward"])
def test_agglomerative_against_scipy(linkage, three_blobs):
    from scipy.cluster.hierarchy import fcluster, linkage as sp_linkage

    X = three_blobs.points[::2]
    ours = agglomerative(PointSet(X), AgglomerativeParams(3, linkage)).labels
    theirs = fcluster(sp_linkage(X, linkage), 3, "maxclust")
    assert same_partition(ours, theirs)


# --- CLIQUE ----------------------------------------------------------------


def test_clique_threshold_zero_all_occupied_dense():
    ps = PointSet([(0, 0), (0.1, 0.1), (9.9, 9.9), (10, 10)])
    res = clique(ps, CliqueParams(intervals=2, threshold=0))
    assert res.n_clusters_found == 2 and res.noise_count == 0


def test_clique_edge_vs_diagonal_adjacency():
    edge = PointSet([(0, 0), (0, 10), (10, 0)])  # cells (0,0),(0,1) share an edge
    res = clique(PointSet([(0.1, 0.1), (0.1, 9.9), (9.9, 0.1), (10, 0)]), CliqueParams(2, 0))
    assert res.n_clusters_found == 1
    diag = PointSet([(0, 0), (10, 10)])
    assert clique(diag, CliqueParams(2, 0)).n_clusters_found == 2
    assert clique(edge, CliqueParams(2, 0)).n_clusters_found == 1


def test_clique_threshold_strict():
    ps = PointSet([(0, 0), (0.1, 0.1), (10, 10)])
    res = clique(ps, CliqueParams(intervals=2, threshold=1))
    assert res.labels.tolist() == [0, 0, NOISE]


def test_clique_coincident_points():
    ps = PointSet([(1, 1)] * 4, ids=range(4))
    assert clique(ps, CliqueParams(5, 0)).labels.tolist() == [0] * 4


def test_clique_permutation_invariant(three_blobs):
    p = CliqueParams(intervals=8, threshold=2)
    base = clique(three_blobs, p).labels
    perm = np.random.default_rng(0).permutation(len(three_blobs))
    shuffled = clique(PointSet(three_blobs.points[perm]), p).labels
    assert np.array_equal(shuffled, base[perm])


# --- silhouette ------------------------------------------------------------


def test_silhouette_two_pairs():
    X = np.array([(0, 0), (0, 1), (10, 10), (10, 11)], dtype=float)
    labels = [0, 0, 1, 1]
    assert silhouette(X, labels) == pytest.approx(silhouette_direct(X, labels), abs=1e-12)
    # frozen value from the direct oracle
    assert silhouette(X, labels) == pytest.approx(0.9292895427118657, abs=1e-12)


def test_silhouette_singletons_zero():
    assert silhouette(FOUR, [0, 1, 2, 3]) == 0


def test_silhouette_undefined():
    with pytest.raises(UndefinedScoreError):
        silhouette(FOUR, [0, 0, 0, 0])
    with pytest.raises(UndefinedScoreError):
        silhouette(FOUR, [0, NOISE, NOISE, NOISE])


def test_silhouette_ignores_noise():
    X = np.array([(0, 0), (0, 1), (10, 10), (10, 11), (50, 50)], dtype=float)
    assert silhouette(X, [0, 0, 1, 1, NOISE]) == pytest.approx(silhouette(X[:4], [0, 0, 1, 1]))


def test_silhouette_chunking_matches(three_blobs, monkeypatch):
    import sys

    mod = sys.modules["citysafe.cluster.silhouette"]

    labels = kmeans(three_blobs, KMeansParams(k=3)).labels
    full = silhouette_samples(three_blobs, labels)
    monkeypatch.setattr(mod, "_CHUNK", 7)
    assert np.allclose(silhouette_samples(three_blobs, labels), full, atol=1e-12)


def test_silhouette_sampling_is_seeded(three_blobs):
    labels = kmeans(three_blobs, KMeansParams(k=3)).labels
    a = silhouette(three_blobs, labels, sample_size=50, seed=1)
    assert a == silhouette(three_blobs, labels, sample_size=50, seed=1)
    assert abs(a - silhouette(three_blobs, labels)) < 0.1


# --- grid search -----------------------------------------------------------


def test_expand_grid():
    assert expand_grid({"a": [1, 2], "b": 3}) == [{"a": 1, "b": 3}, {"a": 2, "b": 3}]
    assert expand_grid([{"a": 1}]) == [{"a": 1}]


def test_grid_search_picks_three_blobs(three_blobs):
    res = grid_search(three_blobs, "kmeans", {"k": list(range(2, 8)), "n_init": [5]})
    assert res.best.n_clusters_found == 3
    assert len(res.table) == 6
    assert res.table[res.best_index]["silhouette"] == max(r["silhouette"] for r in res.table)


def test_grid_of_one(three_blobs):
    res = grid_search(three_blobs, "agglomerative", {"n_clusters": [2]})
    assert res.best_index == 0 and res.best.n_clusters_found == 2


def test_grid_all_undefined(three_blobs):
    with pytest.raises(NoValidClusteringError):
        grid_search(three_blobs, "dbscan", {"eps": [100.0], "min_pts": [2]})


def test_grid_records_parameter_errors(three_blobs):
    res = grid_search(PointSet(three_blobs.points[:5]), "agglomerative", {"n_clusters": [2, 9]})
    assert res.table[1]["silhouette"] is None and "exceeds" in res.table[1]["error"]


def test_grid_tie_goes_to_first():
    # both orderings of the same parameters give identical scores
    ps = PointSet([(0, 0), (0, 1), (10, 0), (10, 1)])
    res = grid_search(ps, "agglomerative", [{"n_clusters": 2, "linkage": "ward"}, {"n_clusters": 2, "linkage": "complete"}])
    assert res.best_index == 0


def test_grid_reorder_invariant_unseeded(three_blobs):
    grid = [{"eps": e, "min_pts": m} for e in (0.05, 0.1, 0.3) for m in (3, 8)]
    a = grid_search(three_blobs, "dbscan", grid)
    b = grid_search(three_blobs, "dbscan", grid[::-1])
    assert a.best.params == b.best.params


def test_grid_seed_per_job(three_blobs):
    res = grid_search(three_blobs, "kmeans", {"k": [2, 3, 4]}, seed=10)
    assert [r["seed"] for r in res.table] == [10 ^ 0, 10 ^ 1, 10 ^ 2]


def test_grid_parallel_matches_serial(three_blobs):
    grid = {"k": [2, 3, 4, 5]}
    a = grid_search(three_blobs, "clarans", grid, seed=3)
    b = grid_search(three_blobs, "clarans", grid, seed=3, n_jobs=2)
    assert a.table == b.table
    assert np.array_equal(a.best.labels, b.best.labels)
