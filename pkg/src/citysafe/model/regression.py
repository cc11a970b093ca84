"""Train/test split, least-squares regression and evaluation metrics."""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..errors import EvaluationError, FitError, SplitError


class ModelWarning(UserWarning):
    """Degenerate fits and undefined metric conventions."""


def split_indices(n: int, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle ``range(n)``; the first ``ceil(n * test_fraction)`` go to test.

    The test share is clamped so that both parts are non-empty.
    """
    if not 0 < test_fraction < 1:
        raise SplitError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if n < 2:
        raise SplitError(f"cannot split {n} rows")
    # rounding first keeps 10 * 0.2 from turning into 3
    n_test = min(max(math.ceil(round(n * test_fraction, 9)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return perm[n_test:], perm[:n_test]


def _take(table, idx: np.ndarray):
    if isinstance(table, np.ndarray):
        return table[idx]
    if hasattr(table, "with_rows"):
        return table.with_rows([table.rows[i] for i in idx])
    if dataclasses.is_dataclass(table) and hasattr(table, "rows"):
        return dataclasses.replace(table, rows=[table.rows[i] for i in idx])
    return [table[i] for i in idx]


def train_test_split(table, test_fraction: float = 0.2, seed: int = 0):
    """Split an array, list, ``Dataset`` or feature table into (train, test)."""
    n = len(table.rows) if hasattr(table, "rows") else len(table)
    train_idx, test_idx = split_indices(n, test_fraction, seed)
    return _take(table, train_idx), _take(table, test_idx)


def evaluate(y_true, y_pred) -> tuple[float, float]:
    """Return (MSE, R²). A constant target gets R² = 0 and a warning."""
    yt = np.asarray(y_true, dtype=float).ravel()
    yp = np.asarray(y_pred, dtype=float).ravel()
    if len(yt) != len(yp):
        raise EvaluationError(f"length mismatch: {len(yt)} targets vs {len(yp)} predictions")
    if len(yt) == 0:
        raise EvaluationError("cannot evaluate an empty prediction")
    resid = yt - yp
    ss_res = float(resid @ resid)
    dev = yt - yt.mean()
    ss_tot = float(dev @ dev)
    mse = ss_res / len(yt)
    if ss_tot == 0.0:
        warnings.warn("target has zero variance; R² reported as 0", ModelWarning, stacklevel=2)
        return mse, 0.0
    return mse, 1.0 - ss_res / ss_tot


def as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise FitError(f"design must be 2-D, got shape {X.shape}")
    return X


@dataclass
class LinearModel:
    """Least-squares fit ``y ≈ intercept + X @ coef``."""

    intercept: float
    coef: np.ndarray
    features: list[str]
    rank: int
    x_scale: np.ndarray  # population sd of each training column
    kind: str = field(default="ols", init=False)

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != len(self.coef):
            raise ValueError(f"expected {len(self.coef)} columns, got {X.shape[1]}")
        return self.intercept + X @ self.coef

    @property
    def coefficients(self) -> dict[str, float]:
        return {"intercept": float(self.intercept), **{f: float(c) for f, c in zip(self.features, self.coef)}}

    @property
    def importances(self) -> np.ndarray:
        """Absolute standardized coefficients, normalized to sum 1."""
        w = np.abs(self.coef) * self.x_scale
        total = w.sum()
        if total == 0 or not np.isfinite(total):
            return np.full(len(w), 1.0 / len(w)) if len(w) else w
        return w / total

    def params(self) -> dict[str, Any]:
        return {"rank": self.rank}


def ols_fit(X, y, features: Sequence[str] | None = None) -> LinearModel:
    """Ordinary least squares with intercept.

    Columns are centred and solved by SVD, so a rank-deficient design gets
    the minimum-norm slope vector (the intercept is not penalised) and a
    ``ModelWarning``.
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if n == 0:
        raise FitError("empty design matrix")
    if len(y) != n:
        raise FitError(f"{n} rows but {len(y)} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise FitError("design and target must be finite (drop nulls first)")
    names = list(features) if features is not None else [f"x{i}" for i in range(p)]
    if len(names) != p:
        raise FitError(f"{len(names)} feature names for {p} columns")

    xm, ym = X.mean(axis=0), y.mean()
    Xc = X - xm
    if p:
        coef, _, rank, _ = np.linalg.lstsq(Xc, y - ym, rcond=None)
    else:
        coef, rank = np.zeros(0), 0
    if rank < p:
        warnings.warn(
            f"rank-deficient design (rank {rank} < {p} columns); using minimum-norm solution",
            ModelWarning,
            stacklevel=2,
        )
    intercept = float(ym - xm @ coef)
    return LinearModel(intercept, coef, names, int(rank), X.std(axis=0))
