"""Correlation, feature screening and regression on community indicators."""

from .fitting import MODEL_KINDS, ModelReport, design, feature_importance_report, fit_and_report
from .forest import ForestModel, ForestParams, Tree, grow_tree, rf_fit
from .regression import LinearModel, ModelWarning, evaluate, ols_fit, split_indices, train_test_split
from .stats import (
    CorrelationMatrix,
    FeatureSelection,
    PredictorScore,
    chi2_independence,
    chi2_pvalue,
    chi_square_select,
    contingency,
    pearson,
    pearson_matrix,
    quantile_bins,
)

__all__ = [
    "MODEL_KINDS",
    "CorrelationMatrix",
    "FeatureSelection",
    "ForestModel",
    "ForestParams",
    "LinearModel",
    "ModelReport",
    "ModelWarning",
    "PredictorScore",
    "Tree",
    "chi2_independence",
    "chi2_pvalue",
    "chi_square_select",
    "contingency",
    "design",
    "evaluate",
    "feature_importance_report",
    "fit_and_report",
    "grow_tree",
    "ols_fit",
    "pearson",
    "pearson_matrix",
    "quantile_bins",
    "rf_fit",
    "split_indices",
    "train_test_split",
]
