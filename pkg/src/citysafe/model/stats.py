"""Correlation matrices and chi-square feature screening."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import gammaincc


def _values(table, column: str) -> np.ndarray:
    """Column as float array with NaN for nulls."""
    return np.array([np.nan if v is None else float(v) for v in table.column(column)], dtype=float)


@dataclass
class CorrelationMatrix:
    columns: list[str]
    values: np.ndarray  # NaN where undefined

    def get(self, a: str, b: str) -> float | None:
        v = self.values[self.columns.index(a), self.columns.index(b)]
        return None if np.isnan(v) else float(v)

    def to_rows(self) -> list[dict[str, Any]]:
        return [
            {"column": c, **{o: self.get(c, o) for o in self.columns}}
            for c in self.columns
        ]

    def to_json(self) -> dict[str, Any]:
        return {
            "columns": self.columns,
            "matrix": [[None if np.isnan(v) else float(v) for v in row] for row in self.values],
        }


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson r over rows where both values are present; NaN if undefined."""
    ok = ~(np.isnan(x) | np.isnan(y))
    x, y = x[ok], y[ok]
    if len(x) < 2:
        return math.nan
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return math.nan
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def pearson_matrix(table, columns: Sequence[str]) -> CorrelationMatrix:
    """Pairwise-complete Pearson correlations. ``table`` needs ``column(name)``."""
    cols = list(columns)
    data = [_values(table, c) for c in cols]
    k = len(cols)
    m = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i, k):
            if i == j:
                r = pearson(data[i], data[i])
                m[i, i] = 1.0 if not np.isnan(r) else np.nan
            else:
                m[i, j] = m[j, i] = pearson(data[i], data[j])
    return CorrelationMatrix(cols, m)


# ---------------------------------------------------------------------------
# chi-square


def quantile_bins(x: np.ndarray, bins: int) -> np.ndarray | None:
    """Bin index per value using quantile edges; None when all values are equal.

    Tied edges collapse, so heavy ties can yield fewer than ``bins`` bins.
    """
    if len(x) == 0 or np.all(x == x[0]):
        return None
    inner = np.unique(np.quantile(x, np.arange(1, bins) / bins))
    return np.searchsorted(inner, x, side="left")


def contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ra, ia = np.unique(a, return_inverse=True)
    rb, ib = np.unique(b, return_inverse=True)
    table = np.zeros((len(ra), len(rb)))
    np.add.at(table, (ia.reshape(-1), ib.reshape(-1)), 1)
    return table


def chi2_pvalue(stat: float, df: int) -> float:
    """Upper tail of the chi-square distribution via the regularised
    upper incomplete gamma function."""
    if df <= 0:
        return math.nan
    return float(gammaincc(df / 2.0, stat / 2.0))


def chi2_independence(observed) -> tuple[float, int, float]:
    """Chi-square statistic, degrees of freedom and p-value for a table.

    All-zero rows and columns are dropped first.
    """
    obs = np.asarray(observed, dtype=float)
    obs = obs[obs.sum(axis=1) > 0][:, obs.sum(axis=0) > 0]
    r, c = obs.shape
    df = (r - 1) * (c - 1)
    if df <= 0:
        return math.nan, 0, math.nan
    expected = np.outer(obs.sum(axis=1), obs.sum(axis=0)) / obs.sum()
    stat = float(((obs - expected) ** 2 / expected).sum())
    return stat, df, chi2_pvalue(stat, df)


@dataclass
class PredictorScore:
    name: str
    chi2: float | None
    df: int | None
    p_value: float | None
    selected: bool


@dataclass
class FeatureSelection:
    target: str
    alpha: float
    bins: int
    scores: list[PredictorScore] = field(default_factory=list)

    @property
    def selected(self) -> list[str]:
        return [s.name for s in self.scores if s.selected]

    def to_json(self) -> dict[str, Any]:
        return {
            "target": self.target,
            "alpha": self.alpha,
            "bins": self.bins,
            "predictors": [vars(s) for s in self.scores],
            "selected": self.selected,
        }


def chi_square_select(table, target: str, predictors: Sequence[str], alpha: float = 0.05, bins: int = 4) -> FeatureSelection:
    """Quantile-bin target and each predictor, then test independence.

    A predictor is selected when its p-value is below ``alpha``.
    Degenerate predictors (a single bin) get a null statistic.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    y = _values(table, target)
    out = FeatureSelection(target, alpha, bins)
    for name in predictors:
        x = _values(table, name)
        ok = ~(np.isnan(x) | np.isnan(y))
        bx, by = quantile_bins(x[ok], bins), quantile_bins(y[ok], bins)
        if bx is None or by is None:
            out.scores.append(PredictorScore(name, None, None, None, False))
            continue
        stat, df, p = chi2_independence(contingency(by, bx))
        if df == 0:
            out.scores.append(PredictorScore(name, None, None, None, False))
            continue
        out.scores.append(PredictorScore(name, stat, df, p, bool(p < alpha)))
    return out
