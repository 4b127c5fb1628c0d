"""Bagged CART regression forest with out-of-bag scoring.

Trees use variance-reduction splits on axis-aligned thresholds and store a
flat array layout so batch prediction is a vectorized level-by-level descent.
Hyperparameters can be picked by seeded random search over a declared grid,
scored by out-of-bag RMSE.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_SEARCH_GRID: dict[str, list] = {
    "n_trees": [50, 100, 200],
    "max_depth": [3, 5, 8, None],
    "min_samples_split": [2, 4, 8],
    "min_samples_leaf": [1, 2, 4],
}


@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise ValueError("min_samples_split >= 2 and min_samples_leaf >= 1 required")


@dataclass(eq=False)
class _Tree:
    # flat node arrays; feature == -1 marks a leaf
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        idx = np.zeros(x.shape[0], dtype=np.int64)
        for _ in range(self.depth + 1):
            feat = self.feature[idx]
            active = feat >= 0
            if not active.any():
                break
            cols = np.where(active, feat, 0)
            go_left = x[np.arange(x.shape[0]), cols] <= self.threshold[idx]
            nxt = np.where(go_left, self.left[idx], self.right[idx])
            idx = np.where(active, nxt, idx)
        return self.value[idx]


def _best_split(
    x: np.ndarray, y: np.ndarray, min_leaf: int
) -> tuple[int, float, float] | None:
    """Return (feature, threshold, sse_gain) of the best variance split."""
    n = y.size
    total_sum = y.sum()
    total_sse = float(y @ y - total_sum**2 / n)
    best: tuple[int, float, float] | None = None
    for j in range(x.shape[1]):
        order = np.argsort(x[:, j], kind="stable")
        xs, ys = x[order, j], y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        # candidate split after position i (1-based left size)
        sizes = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (sizes >= min_leaf) & (n - sizes >= min_leaf)
        if not valid.any():
            continue
        left_sse = csq[:-1] - csum[:-1] ** 2 / sizes
        right_sum = total_sum - csum[:-1]
        right_sq = (y @ y) - csq[:-1]
        right_sse = right_sq - right_sum**2 / (n - sizes)
        sse = np.where(valid, left_sse + right_sse, np.inf)
        i = int(np.argmin(sse))
        gain = total_sse - float(sse[i])
        if gain <= 1e-12:
            continue
        threshold = 0.5 * (xs[i] + xs[i + 1])
        if best is None or gain > best[2]:
            best = (j, float(threshold), gain)
    return best


def _grow_tree(x: np.ndarray, y: np.ndarray, hp: ForestHyperparams) -> _Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    max_depth_seen = 0

    def add_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(rows: np.ndarray, depth: int) -> int:
        nonlocal max_depth_seen
        max_depth_seen = max(max_depth_seen, depth)
        node = add_node()
        ys = y[rows]
        value[node] = float(ys.mean())
        if (
            rows.size < hp.min_samples_split
            or (hp.max_depth is not None and depth >= hp.max_depth)
            or np.all(ys == ys[0])
        ):
            return node
        split = _best_split(x[rows], ys, hp.min_samples_leaf)
        if split is None:
            return node
        j, thr, _ = split
        mask = x[rows, j] <= thr
        feature[node] = j
        threshold[node] = thr
        left[node] = build(rows[mask], depth + 1)
        right[node] = build(rows[~mask], depth + 1)
        return node

    build(np.arange(y.size), 0)
    return _Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
        depth=max_depth_seen,
    )


@dataclass(eq=False)
class ForestModel:
    hyperparams: ForestHyperparams
    trees: list[_Tree]
    bootstrap_indices: list[np.ndarray]
    rng_seed: int
    n_train: int
    target_range: tuple[float, float]


def forest_fit(
    inputs: np.ndarray,
    targets: np.ndarray,
    hyperparams: ForestHyperparams | None = None,
    rng_seed: int = 0,
    bootstrap: bool = True,
    search_grid: dict[str, list] | None = None,
    n_search_candidates: int = 12,
) -> ForestModel:
    """Fit a bagged forest. With hyperparams=None, run seeded random search
    over the declared grid and keep the candidate with the lowest OOB RMSE."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if x.shape[0] != y.size or y.size == 0:
        raise ValueError("inputs and targets must be non-empty and aligned")

    if hyperparams is None:
        return _search_fit(x, y, rng_seed, search_grid or DEFAULT_SEARCH_GRID, n_search_candidates)

    if y.size < hyperparams.min_samples_split:
        raise ValueError(
            f"need at least min_samples_split={hyperparams.min_samples_split} rows, got {y.size}"
        )
    rng = np.random.default_rng(rng_seed)
    trees: list[_Tree] = []
    boots: list[np.ndarray] = []
    for _ in range(hyperparams.n_trees):
        rows = (
            rng.integers(0, y.size, size=y.size)
            if bootstrap
            else np.arange(y.size)
        )
        trees.append(_grow_tree(x[rows], y[rows], hyperparams))
        boots.append(rows)
    return ForestModel(
        hyperparams=hyperparams,
        trees=trees,
        bootstrap_indices=boots,
        rng_seed=rng_seed,
        n_train=y.size,
        target_range=(float(y.min()), float(y.max())),
    )


def forest_predict(model: ForestModel, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    acc = np.zeros(pts.shape[0])
    for tree in model.trees:
        acc += tree.predict(pts)
    return acc / len(model.trees)


def oob_error(model: ForestModel, inputs: np.ndarray, targets: np.ndarray) -> float:
    """Out-of-bag RMSE over rows left out by at least one tree."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    acc = np.zeros(y.size)
    counts = np.zeros(y.size)
    for tree, rows in zip(model.trees, model.bootstrap_indices):
        oob = np.ones(y.size, dtype=bool)
        oob[rows] = False
        if not oob.any():
            continue
        acc[oob] += tree.predict(x[oob])
        counts[oob] += 1
    covered = counts > 0
    if not covered.any():
        return float("inf")
    err = acc[covered] / counts[covered] - y[covered]
    return float(np.sqrt(np.mean(err**2)))


def _search_fit(
    x: np.ndarray, y: np.ndarray, rng_seed: int, grid: dict[str, list], n_candidates: int
) -> ForestModel:
    rng = np.random.default_rng(rng_seed)
    keys = sorted(grid)
    seen: set[tuple] = set()
    candidates: list[ForestHyperparams] = []
    for _ in range(n_candidates * 4):
        if len(candidates) >= n_candidates:
            break
        combo = tuple(grid[k][rng.integers(0, len(grid[k]))] for k in keys)
        if combo in seen:
            continue
        seen.add(combo)
        candidates.append(ForestHyperparams(**dict(zip(keys, combo))))

    best_model: ForestModel | None = None
    best_score = np.inf
    for i, hp in enumerate(candidates):
        if y.size < hp.min_samples_split:
            continue
        model = forest_fit(x, y, hyperparams=hp, rng_seed=rng_seed + 1 + i)
        score = oob_error(model, x, y)
        if score < best_score:
            best_model, best_score = model, score
    if best_model is None:
        raise ValueError("no feasible hyperparameter candidate for this dataset")
    return best_model
