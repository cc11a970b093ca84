"""Split, fit and score a model against a community feature table."""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import FitError
from .forest import ForestModel, ForestParams, rf_fit
from .regression import LinearModel, evaluate, ols_fit, split_indices

MODEL_KINDS = ("ols", "random_forest")

IMPORTANCE_METHODS = {
    "ols": "normalized_abs_standardized_coefficient",
    "random_forest": "normalized_variance_reduction",
}


@dataclass
class ModelReport:
    kind: str
    target: str
    features: list[str]
    importances: dict[str, float]
    mse: float  # on the test rows
    r2: float
    n_train: int
    n_test: int
    seed: int
    coefficients: dict[str, float] | None = None
    train_mse: float | None = None
    train_r2: float | None = None
    params: dict[str, Any] = field(default_factory=dict)
    dropped_rows: int = 0

    @property
    def importance_method(self) -> str:
        return IMPORTANCE_METHODS[self.kind]

    def ranked(self) -> list[tuple[str, float]]:
        return sorted(self.importances.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "target": self.target,
            "features": self.features,
            "coefficients": self.coefficients,
            "importances": self.importances,
            "importance_method": self.importance_method,
            "test_mse": self.mse,
            "test_r2": self.r2,
            "train_mse": self.train_mse,
            "train_r2": self.train_r2,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "dropped_rows": self.dropped_rows,
            "seed": self.seed,
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)


def design(table, target: str, predictors: Sequence[str]) -> tuple[np.ndarray, np.ndarray, int]:
    """Numeric (X, y) from a table with ``column(name)``; rows with any null
    are dropped and counted."""
    cols = [table.column(c) for c in [*predictors, target]]
    data = np.array(
        [[np.nan if v is None else float(v) for v in col] for col in cols], dtype=float
    ).T.reshape(-1, len(cols))
    ok = np.all(np.isfinite(data), axis=1)
    data = data[ok]
    return data[:, :-1], data[:, -1], int((~ok).sum())


def fit_and_report(
    table,
    target: str,
    predictors: Sequence[str],
    kind: str = "ols",
    test_fraction: float = 0.2,
    seed: int = 0,
    n_jobs: int = 1,
    **params: Any,
) -> tuple[ModelReport, LinearModel | ForestModel]:
    """Seeded train/test split, fit on train, score on test.

    ``params`` go to the forest (n_trees, max_depth, min_leaf, ...); the forest
    seed defaults to the split seed.
    """
    if kind not in MODEL_KINDS:
        raise FitError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    X, y, dropped = design(table, target, predictors)
    train, test = split_indices(len(y), test_fraction, seed)
    names = list(predictors)
    model: LinearModel | ForestModel
    if kind == "ols":
        if params:
            raise FitError(f"ols takes no hyperparameters, got {sorted(params)}")
        model = ols_fit(X[train], y[train], names)
        used = model.params()
        coefs = model.coefficients
    else:
        fp = ForestParams(**{"seed": seed, **params})
        model = rf_fit(X[train], y[train], fp, names, n_jobs=n_jobs)
        used = fp.to_dict()
        used["features_per_split"] = fp.n_features(len(names))
        coefs = None
    mse, r2 = evaluate(y[test], model.predict(X[test]))
    tr_mse, tr_r2 = evaluate(y[train], model.predict(X[train]))
    imp = model.importances
    report = ModelReport(
        kind=kind,
        target=target,
        features=names,
        importances={f: float(v) for f, v in zip(names, imp)},
        mse=mse,
        r2=r2,
        n_train=len(train),
        n_test=len(test),
        seed=seed,
        coefficients=coefs,
        train_mse=tr_mse,
        train_r2=tr_r2,
        params=used,
        dropped_rows=dropped,
    )
    return report, model


def feature_importance_report(reports: Mapping[str, ModelReport]) -> dict[str, list[dict[str, Any]]]:
    """Per-target importance tables, most important first (ties by name)."""
    out: dict[str, list[dict[str, Any]]] = {}
    for target, rep in reports.items():
        out[target] = [
            {"rank": i + 1, "feature": f, "importance": v, "model": rep.kind, "method": rep.importance_method}
            for i, (f, v) in enumerate(rep.ranked())
        ]
    return out
