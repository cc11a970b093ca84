"""Random-forest regression built on variance-reduction CART trees."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..errors import FitError, ParameterError
from .regression import as_matrix


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None  # None = grow until leaves are pure or min_leaf binds
    min_leaf: int = 1
    max_features: int | None = None  # None = ceil(p / 3)
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ParameterError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ParameterError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ParameterError("min_leaf must be >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise ParameterError("max_features must be >= 1")

    def n_features(self, p: int) -> int:
        m = self.max_features if self.max_features is not None else math.ceil(p / 3)
        return max(1, min(p, m))

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "max_features": self.max_features,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }


@dataclass
class Tree:
    """Flat array tree; ``feature == -1`` marks a leaf. Left is ``x <= threshold``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray  # per-feature total SSE reduction

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] >= 0
        return self.value[node]

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[float, float] | None:
    """Best (gain, threshold) on one feature, or None if no valid cut exists."""
    n = len(y)
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    # candidate cut after position i-1 (left size i)
    sizes = np.arange(min_leaf, n - min_leaf + 1)
    if len(sizes) == 0:
        return None
    valid = xs[sizes - 1] < xs[sizes]
    if not valid.any():
        return None
    yc = ys - ys.mean()
    cs, cs2 = np.cumsum(yc), np.cumsum(yc * yc)
    s_l, q_l = cs[sizes - 1], cs2[sizes - 1]
    s_r, q_r = cs[-1] - s_l, cs2[-1] - q_l
    sse = (q_l - s_l * s_l / sizes) + (q_r - s_r * s_r / (n - sizes))
    sse = np.where(valid, sse, np.inf)
    best = int(np.argmin(sse))
    gain = cs2[-1] - sse[best]
    lo, hi = xs[sizes[best] - 1], xs[sizes[best]]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return float(gain), float(thr)


def grow_tree(X: np.ndarray, y: np.ndarray, params: ForestParams, rng: np.random.Generator) -> Tree:
    n, p = X.shape
    mtry = params.n_features(p)
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    gain = np.zeros(p)

    def new_node(val: float) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(val)
        return len(value) - 1

    root = new_node(float(y.mean()))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yi = y[idx]
        if len(idx) < 2 * params.min_leaf or np.ptp(yi) == 0:
            continue
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        perm = rng.permutation(p)
        best = None
        # try the random subset first; fall back to the rest only if nothing splits
        for chunk in (perm[:mtry], perm[mtry:]):
            for f in chunk:
                cand = _best_split(X[idx, f], yi, params.min_leaf)
                if cand is not None and cand[0] > 0 and (best is None or cand[0] > best[0]):
                    best = (cand[0], cand[1], int(f))
            if best is not None:
                break
        if best is None:
            continue
        g, thr, f = best
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        gain[f] += g
        left[node] = new_node(float(y[li].mean()))
        right[node] = new_node(float(y[ri].mean()))
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value),
        gain,
    )


def _fit_one(job: tuple[np.ndarray, np.ndarray, ForestParams, int]) -> Tree:
    X, y, params, t = job
    rng = np.random.default_rng([params.seed, t])
    if params.bootstrap:
        idx = rng.integers(0, len(y), size=len(y))
        return grow_tree(X[idx], y[idx], params, rng)
    return grow_tree(X, y, params, rng)


@dataclass
class ForestModel:
    trees: list[Tree]
    features: list[str]
    params: ForestParams
    y_range: tuple[float, float]
    kind: str = field(default="random_forest", init=False)

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != len(self.features):
            raise ValueError(f"expected {len(self.features)} columns, got {X.shape[1]}")
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return np.clip(total / len(self.trees), *self.y_range)

    @property
    def importances(self) -> np.ndarray:
        """Share of total variance reduction per feature; uniform if no tree split."""
        g = np.sum([t.gain for t in self.trees], axis=0)
        s = g.sum()
        if s <= 0:
            return np.full(len(self.features), 1.0 / len(self.features))
        return g / s


def rf_fit(
    X,
    y,
    params: ForestParams | None = None,
    features: Sequence[str] | None = None,
    n_jobs: int = 1,
    **overrides: Any,
) -> ForestModel:
    """Fit a bootstrap forest. Tree ``t`` draws from ``default_rng([seed, t])``,
    so the result does not depend on ``n_jobs``."""
    if params is None:
        params = ForestParams(**overrides)
    elif overrides:
        params = ForestParams(**{**params.to_dict(), **overrides})
    X = as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if n == 0 or p == 0:
        raise FitError("empty design matrix")
    if len(y) != n:
        raise FitError(f"{n} rows but {len(y)} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise FitError("design and target must be finite (drop nulls first)")
    names = list(features) if features is not None else [f"x{i}" for i in range(p)]

    jobs = [(X, y, params, t) for t in range(params.n_trees)]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(_fit_one, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))
    else:
        trees = [_fit_one(j) for j in jobs]
    return ForestModel(trees, names, params, (float(y.min()), float(y.max())))
