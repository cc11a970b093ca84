import math
import warnings

import numpy as np
import pytest

from citysafe.errors import EvaluationError, FitError, ParameterError, SplitError
from citysafe.features import CommunityFeatureTable
from citysafe.model import (
    ForestParams,
    ModelWarning,
    chi2_independence,
    chi2_pvalue,
    chi_square_select,
    evaluate,
    feature_importance_report,
    fit_and_report,
    ols_fit,
    pearson_matrix,
    quantile_bins,
    rf_fit,
    split_indices,
    train_test_split,
)
from oracles import chi2_direct, chi2_sf_quadrature, pearson_direct


class Cols:
    """Minimal column-access table."""

    def __init__(self, **cols):
        self.cols = cols

    def column(self, name):
        return self.cols[name]


# --- correlation -----------------------------------------------------------


def test_pearson_examples():
    x = [1.0, 2.0, 3.0, 4.0]
    m = pearson_matrix(Cols(x=x, y=[2 * v + 3 for v in x], z=[-v for v in x]), ["x", "y", "z"])
    assert m.get("x", "y") == pytest.approx(1.0, abs=1e-12)
    assert m.get("x", "z") == pytest.approx(-1.0, abs=1e-12)
    assert pearson_matrix(Cols(x=[1, 2, 3], y=[1, 3, 2]), ["x", "y"]).get("x", "y") == pytest.approx(0.5)


def test_pearson_constant_column_is_null():
    m = pearson_matrix(Cols(x=[1, 2, 3], c=[4, 4, 4]), ["x", "c"])
    assert m.get("x", "c") is None and m.get("c", "c") is None
    assert m.get("x", "x") == 1.0


def test_pearson_pairwise_complete():
    x = [1.0, 2.0, None, 4.0, 5.0]
    y = [2.0, 1.0, 7.0, None, 3.0]
    m = pearson_matrix(Cols(x=x, y=y), ["x", "y"])
    assert m.get("x", "y") == pytest.approx(pearson_direct([1, 2, 5], [2, 1, 3]))


def test_pearson_symmetric_and_affine_invariant():
    rng = np.random.default_rng(0)
    data = {f"c{i}": list(rng.normal(size=30)) for i in range(4)}
    m = pearson_matrix(Cols(**data), list(data))
    assert np.allclose(m.values, m.values.T, atol=1e-12)
    assert np.all(np.diag(m.values) == 1.0)
    shifted = dict(data, c0=[3 * v + 7 for v in data["c0"]])
    m2 = pearson_matrix(Cols(**shifted), list(data))
    assert np.allclose(m.values, m2.values, atol=1e-12)


# --- chi-square ------------------------------------------------------------


def test_chi2_example():
    stat, df, p = chi2_independence([[10, 20], [30, 40]])
    assert stat == pytest.approx(0.7937, abs=1e-3)
    assert stat == pytest.approx(chi2_direct([[10, 20], [30, 40]]), abs=1e-9)
    assert df == 1
    assert p == pytest.approx(chi2_sf_quadrature(stat, 1), abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_chi2_random_tables(seed):
    t = np.random.default_rng(seed).integers(1, 50, size=(3, 4))
    stat, df, p = chi2_independence(t)
    assert stat == pytest.approx(chi2_direct(t.tolist()), abs=1e-9)
    assert df == 6
    assert p == pytest.approx(chi2_sf_quadrature(stat, df), abs=1e-9)


def test_chi2_pvalue_known():
    # upper 5% point of chi-square with 1 df
    assert chi2_pvalue(3.841458820694124, 1) == pytest.approx(0.05, abs=1e-12)


def test_quantile_bins():
    assert quantile_bins(np.array([1.0, 2, 3, 4, 5, 6, 7, 8]), 4).tolist() == [0, 0, 1, 1, 2, 2, 3, 3]
    assert quantile_bins(np.array([2.0, 2, 2]), 4) is None


def test_select_copy_of_target():
    rng = np.random.default_rng(1)
    y = list(rng.uniform(size=200))
    sel = chi_square_select(Cols(y=y, x=list(y)), "y", ["x"])
    s = sel.scores[0]
    assert s.selected and s.p_value < 1e-12 and s.df == 9


def test_select_degenerate_predictor():
    sel = chi_square_select(Cols(y=[1.0, 2, 3, 4], c=[5, 5, 5, 5]), "y", ["c"])
    s = sel.scores[0]
    assert (s.chi2, s.df, s.p_value, s.selected) == (None, None, None, False)


def test_select_invariant_selected_iff_p_below_alpha():
    rng = np.random.default_rng(2)
    y = rng.uniform(size=80)
    cols = {"y": list(y), "a": list(y + rng.normal(0, 0.1, 80)), "b": list(rng.uniform(size=80))}
    sel = chi_square_select(Cols(**cols), "y", ["a", "b"], alpha=0.05)
    for s in sel.scores:
        assert s.selected == (s.p_value < 0.05)
        assert s.chi2 >= 0
    assert sel.selected == ["a"]


def test_select_argument_checks():
    with pytest.raises(ValueError):
        chi_square_select(Cols(y=[1]), "y", [], alpha=1.5)
    with pytest.raises(ValueError):
        chi_square_select(Cols(y=[1]), "y", [], bins=1)


# --- split -----------------------------------------------------------------


def test_split_examples():
    tr, te = split_indices(10, 0.2, 0)
    assert (len(tr), len(te)) == (8, 2)
    tr, te = split_indices(3, 0.5, 0)
    assert (len(tr), len(te)) == (1, 2)
    assert [a.tolist() for a in split_indices(50, 0.2, 9)] == [a.tolist() for a in split_indices(50, 0.2, 9)]


def test_split_errors():
    with pytest.raises(SplitError):
        split_indices(1, 0.2, 0)
    with pytest.raises(SplitError):
        split_indices(10, 0.0, 0)
    with pytest.raises(SplitError):
        split_indices(10, 1.0, 0)


def test_split_partitions_rows():
    for n in (2, 3, 7, 100):
        for f in (0.01, 0.2, 0.5, 0.99):
            tr, te = split_indices(n, f, n)
            assert sorted(tr.tolist() + te.tolist()) == list(range(n))
            assert len(tr) >= 1 and len(te) >= 1


def test_split_containers():
    tr, te = train_test_split(list("abcdefghij"), 0.2, 0)
    assert sorted(tr + te) == list("abcdefghij")
    table = CommunityFeatureTable(["community_name"], [{"community_name": str(i)} for i in range(5)])
    tr, te = train_test_split(table, 0.4, 0)
    assert len(tr) == 3 and len(te) == 2 and tr.columns == table.columns


# --- OLS -------------------------------------------------------------------


def test_ols_perfect_line():
    m = ols_fit([[0], [1], [2]], [0, 1, 2])
    assert m.coef[0] == pytest.approx(1.0) and m.intercept == pytest.approx(0.0, abs=1e-12)
    mse, r2 = evaluate([0, 1, 2], m.predict([[0], [1], [2]]))
    assert mse == pytest.approx(0.0, abs=1e-24) and r2 == pytest.approx(1.0)


def test_ols_constant_target():
    m = ols_fit([[0], [1], [2]], [4, 4, 4])
    assert m.coef[0] == pytest.approx(0.0, abs=1e-12) and m.intercept == pytest.approx(4.0)
    with pytest.warns(ModelWarning):
        assert evaluate([4, 4, 4], m.predict([[0], [1], [2]]))[1] == 0.0


def test_ols_recovers_coefficients():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 2))
    y = 3 + 2 * X[:, 0] - X[:, 1]
    m = ols_fit(X, y)
    assert np.allclose([m.intercept, *m.coef], [3, 2, -1], atol=1e-8)
    assert np.linalg.norm(y - m.predict(X)) < 1e-8


def test_ols_residuals_orthogonal():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 3)) * [1, 100, 0.01]
    y = rng.normal(size=40)
    m = ols_fit(X, y)
    r = y - m.predict(X)
    D = np.column_stack([np.ones(40), X])
    assert np.all(np.abs(D.T @ r) < 1e-6 * np.abs(D).max(axis=0) * np.abs(y).max() * 40)


def test_ols_rank_deficient_min_norm():
    x = np.arange(6.0)
    X = np.column_stack([x, x])
    with pytest.warns(ModelWarning, match="rank"):
        m = ols_fit(X, 2 * x)
    # minimum-norm splits the slope equally between the duplicates
    assert m.coef == pytest.approx([1.0, 1.0])
    assert m.rank == 1


def test_ols_errors():
    with pytest.raises(FitError):
        ols_fit(np.empty((0, 2)), [])
    with pytest.raises(FitError):
        ols_fit([[1.0], [float("nan")]], [1, 2])


def test_ols_importance_standardized():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(100, 2)) * [1.0, 10.0]
    y = 1.0 * X[:, 0] + 0.1 * X[:, 1]
    imp = ols_fit(X, y).importances
    # both contribute equally once scaled by their spread
    assert imp.sum() == pytest.approx(1.0)
    assert imp[0] == pytest.approx(imp[1], rel=0.15)


# --- evaluate --------------------------------------------------------------


def test_evaluate_examples():
    assert evaluate([1, 2, 3], [1, 2, 3]) == (0.0, 1.0)
    assert evaluate([1, 2, 3], [2, 2, 2])[1] == 0.0
    mse, r2 = evaluate([1, 2, 3], [1, 2, 5])
    assert mse == pytest.approx(4 / 3) and r2 == pytest.approx(-1.0)


def test_evaluate_errors():
    with pytest.raises(EvaluationError):
        evaluate([1, 2], [1])
    with pytest.raises(EvaluationError):
        evaluate([], [])


# --- forest ----------------------------------------------------------------


def test_forest_params_validation():
    with pytest.raises(ParameterError):
        ForestParams(max_depth=0)
    with pytest.raises(ParameterError):
        ForestParams(n_trees=0)
    assert ForestParams().n_features(10) == 4
    assert ForestParams().n_features(1) == 1


def test_single_tree_reproduces_training_data():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(60, 2))
    y = np.sin(5 * X[:, 0]) + X[:, 1]
    f = rf_fit(X, y, n_trees=1, bootstrap=False, seed=0)
    assert evaluate(y, f.predict(X)) == (pytest.approx(0.0, abs=1e-20), 1.0)


def test_forest_determinism_and_parallel():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(80, 3))
    y = X[:, 0] * 3 + rng.normal(0, 0.1, 80)
    a = rf_fit(X, y, n_trees=12, seed=5).predict(X)
    b = rf_fit(X, y, n_trees=12, seed=5).predict(X)
    c = rf_fit(X, y, n_trees=12, seed=5, n_jobs=3).predict(X)
    assert a.tobytes() == b.tobytes() == c.tobytes()
    d = rf_fit(X, y, n_trees=12, seed=6).predict(X)
    assert not np.array_equal(a, d)


def test_forest_bounds_and_importances():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(100, 4))
    y = 10 * X[:, 0] ** 2
    f = rf_fit(X, y, n_trees=20, seed=0)
    imp = f.importances
    assert imp.sum() == pytest.approx(1.0, abs=1e-9) and (imp >= 0).all()
    assert np.argmax(imp) == 0
    pred = f.predict(rng.uniform(-5, 5, size=(200, 4)))
    assert pred.min() >= y.min() and pred.max() <= y.max()


def test_forest_single_driver_gets_full_importance():
    X = np.column_stack([np.arange(20.0), np.zeros(20)])
    f = rf_fit(X, np.arange(20.0) ** 2, n_trees=5, seed=0)
    assert f.importances.tolist() == [1.0, 0.0]


def test_forest_duplicated_feature_shares_importance():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=100)
    noise = rng.uniform(size=100)
    y = np.sin(4 * x)
    # every feature is tried at shallow splits so the copies only trade ties
    single = rf_fit(np.column_stack([x, noise]), y, n_trees=1, bootstrap=False, max_features=2, max_depth=3).importances
    dup = rf_fit(np.column_stack([x, x, noise]), y, n_trees=1, bootstrap=False, max_features=3, max_depth=3).importances
    assert dup.sum() == pytest.approx(1.0, abs=1e-9)
    assert dup[0] + dup[1] == pytest.approx(single[0], abs=1e-9)
    assert dup[2] == pytest.approx(single[1], abs=1e-9)


def test_forest_no_split_uniform_importance():
    f = rf_fit(np.arange(10.0)[:, None].repeat(2, axis=1), np.ones(10), n_trees=3)
    assert f.importances.tolist() == [0.5, 0.5]


def test_forest_max_depth_limits_leaves():
    X = np.arange(64.0)[:, None]
    f = rf_fit(X, X[:, 0], n_trees=1, bootstrap=False, max_depth=2)
    assert f.trees[0].n_leaves == 4


def test_forest_min_leaf():
    X = np.arange(30.0)[:, None]
    f = rf_fit(X, X[:, 0] ** 2, n_trees=1, bootstrap=False, min_leaf=5)
    counts = np.bincount(np.searchsorted(np.sort(np.unique(f.predict(X))), f.predict(X)))
    assert counts.min() >= 5


def test_forest_fit_errors():
    with pytest.raises(FitError):
        rf_fit(np.empty((0, 2)), [])


# --- reports ---------------------------------------------------------------


def _synthetic_table(n=40, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        a, b = rng.uniform(0, 10, 2)
        rows.append({"community_name": f"c{i}", "a": a, "b": b, "y": 3 + 2 * a - b, "gap": None if i == 0 else 1.0})
    return CommunityFeatureTable(["community_name", "a", "b", "y", "gap"], rows)


def test_fit_and_report_ols():
    rep, model = fit_and_report(_synthetic_table(), "y", ["a", "b"], "ols", seed=1)
    assert (rep.n_train, rep.n_test) == (32, 8)
    assert rep.mse == pytest.approx(0.0, abs=1e-18) and rep.r2 == pytest.approx(1.0)
    assert rep.coefficients["a"] == pytest.approx(2.0)
    assert sum(rep.importances.values()) == pytest.approx(1.0)
    d = rep.to_dict()
    assert d["importance_method"] == "normalized_abs_standardized_coefficient"
    assert rep.to_json() == rep.to_json()


def test_fit_and_report_drops_null_rows():
    # gap is constant once the null row goes, so the design loses a rank
    with pytest.warns(ModelWarning, match="rank"):
        rep, _ = fit_and_report(_synthetic_table(), "y", ["a", "gap"], "ols", seed=1)
    assert rep.dropped_rows == 1 and rep.n_train + rep.n_test == 39


def test_fit_and_report_forest():
    rep, model = fit_and_report(_synthetic_table(), "y", ["a", "b"], "random_forest", seed=2, n_trees=10)
    assert rep.params["n_trees"] == 10 and rep.params["seed"] == 2
    assert rep.coefficients is None
    assert rep.r2 <= 1 and rep.mse >= 0
    assert math.isclose(sum(rep.importances.values()), 1.0, abs_tol=1e-9)


def test_fit_and_report_rejects_unknown_kind():
    with pytest.raises(FitError):
        fit_and_report(_synthetic_table(), "y", ["a"], "svm")


def test_importance_report_ranked():
    rep, _ = fit_and_report(_synthetic_table(), "y", ["a", "b"], "ols", seed=1)
    table = feature_importance_report({"y": rep})["y"]
    assert [r["rank"] for r in table] == [1, 2]
    assert table[0]["importance"] >= table[1]["importance"]
    assert table[0]["feature"] == "a"


def test_warnings_do_not_leak_from_clean_fit():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit_and_report(_synthetic_table(), "y", ["a", "b"], "ols", seed=1)
