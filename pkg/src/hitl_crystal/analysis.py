"""Statistical diagnostics surfaced to the human expert each cycle: Pearson
correlations, permutation-sampled Shapley importances with a random-noise
control feature, and one-sigma sensitivity profiles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

PredictFn = Callable[[np.ndarray], np.ndarray]

RANDOM_CONTROL_NAME = "random_control"


@dataclass(eq=False)
class CorrelationMatrix:
    names: tuple[str, ...]
    matrix: np.ndarray
    n_samples: int
    dropped: tuple[str, ...] = ()

    def value(self, a: str, b: str) -> float:
        return float(self.matrix[self.names.index(a), self.names.index(b)])

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "matrix": self.matrix.tolist(),
            "n_samples": self.n_samples,
            "dropped": list(self.dropped),
        }


@dataclass(eq=False)
class ImportanceReport:
    names: tuple[str, ...]
    importance: np.ndarray  # mean |shapley| per feature
    half_widths: np.ndarray
    ranks: tuple[int, ...]  # 1 = most important
    n_permutations: int
    row_values: np.ndarray  # per explained row mean shapley values (rows x features)
    sampled_background_mean: float

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "importance": self.importance.tolist(),
            "half_widths": self.half_widths.tolist(),
            "ranks": list(self.ranks),
            "n_permutations": self.n_permutations,
            "sampled_background_mean": self.sampled_background_mean,
        }

    def importance_of(self, name: str) -> float:
        return float(self.importance[self.names.index(name)])


@dataclass(eq=False)
class SensitivityReport:
    names: tuple[str, ...]
    responses: np.ndarray  # mean |f(x + s e) - f(x - s e)| per feature
    normalized: np.ndarray  # responses / max (zeros when flat)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "responses": self.responses.tolist(),
            "normalized": self.normalized.tolist(),
        }

    def top_features(self, k: int) -> tuple[str, ...]:
        order = np.argsort(-self.normalized, kind="stable")
        return tuple(self.names[i] for i in order[:k])


def pearson_matrix(
    data: np.ndarray, names: Sequence[str]
) -> CorrelationMatrix:
    """Pairwise Pearson coefficients; constant columns are dropped, not NaN'd."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[0] < 3:
        raise ValueError("need at least 3 rows for a correlation matrix")
    if data.shape[1] != len(names):
        raise ValueError("names must match the number of columns")

    stds = data.std(axis=0)
    keep = stds > 0
    dropped = tuple(str(n) for n, ok in zip(names, keep) if not ok)
    if not keep.any():
        raise ValueError("all columns are constant; correlation matrix is empty")
    kept = data[:, keep]
    matrix = np.corrcoef(kept, rowvar=False)
    matrix = np.atleast_2d(matrix)
    matrix = 0.5 * (matrix + matrix.T)
    np.fill_diagonal(matrix, 1.0)
    matrix = np.clip(matrix, -1.0, 1.0)
    kept_names = tuple(str(n) for n, ok in zip(names, keep) if ok)
    return CorrelationMatrix(
        names=kept_names, matrix=matrix, n_samples=data.shape[0], dropped=dropped
    )


def shapley_importance(
    model_predict_fn: PredictFn,
    background_matrix: np.ndarray,
    explain_matrix: np.ndarray,
    n_permutations: int = 500,
    rng_seed: int = 0,
    feature_names: Sequence[str] | None = None,
    add_random_control: bool = True,
) -> ImportanceReport:
    """Monte-Carlo permutation Shapley values with marginal baselines.

    Each permutation draws one background row, then walks the features in
    permuted order replacing background values with the explained row's
    values; attributions telescope so per-permutation values sum exactly to
    f(x) - f(z). A uniform-noise control column is scored identically and
    serves as the importance floor.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    background = np.atleast_2d(np.asarray(background_matrix, dtype=float))
    explain = np.atleast_2d(np.asarray(explain_matrix, dtype=float))
    if background.shape[0] == 0:
        raise ValueError("background matrix must be non-empty")
    if background.shape[1] != explain.shape[1]:
        raise ValueError("background and explain matrices disagree on feature count")

    d_real = background.shape[1]
    names = tuple(feature_names) if feature_names else tuple(f"x{i}" for i in range(d_real))
    if len(names) != d_real:
        raise ValueError("feature_names must match the feature count")

    rng = np.random.default_rng(rng_seed)
    predict = model_predict_fn
    if add_random_control:
        control_rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0xC0]))
        background = np.column_stack(
            [background, control_rng.random(background.shape[0])]
        )
        explain = np.column_stack([explain, control_rng.random(explain.shape[0])])
        names = names + (RANDOM_CONTROL_NAME,)

        def predict(pts: np.ndarray, _fn=model_predict_fn) -> np.ndarray:
            return np.asarray(_fn(pts[:, :d_real]), dtype=float)

    d = background.shape[1]
    n_rows = explain.shape[0]
    phi_sum = np.zeros((n_rows, d))
    phi_sq = np.zeros((n_rows, d))
    z_pred_sum = 0.0

    for _ in range(n_permutations):
        order = rng.permutation(d)
        z = background[rng.integers(0, background.shape[0])]
        # stage s: background row with the first s permuted features replaced
        stages = np.empty((d + 1, n_rows, d))
        stages[0] = np.tile(z, (n_rows, 1))
        for s, j in enumerate(order):
            stages[s + 1] = stages[s]
            stages[s + 1][:, j] = explain[:, j]
        preds = np.asarray(
            predict(stages.reshape((d + 1) * n_rows, d)), dtype=float
        ).reshape(d + 1, n_rows)
        deltas = preds[1:] - preds[:-1]  # (d, n_rows) in permutation order
        phi_sum[np.arange(n_rows)[:, None], order[None, :]] += deltas.T
        phi_sq[np.arange(n_rows)[:, None], order[None, :]] += deltas.T**2
        z_pred_sum += float(preds[0].mean())

    phi_mean = phi_sum / n_permutations
    variance = np.maximum(phi_sq / n_permutations - phi_mean**2, 0.0)
    se = np.sqrt(variance / n_permutations)

    importance = np.abs(phi_mean).mean(axis=0)
    half_widths = 1.96 * np.sqrt((se**2).sum(axis=0)) / n_rows
    order = np.argsort(-importance, kind="stable")
    ranks = [0] * d
    for position, idx in enumerate(order, start=1):
        ranks[idx] = position
    return ImportanceReport(
        names=names,
        importance=importance,
        half_widths=half_widths,
        ranks=tuple(ranks),
        n_permutations=n_permutations,
        row_values=phi_mean,
        sampled_background_mean=z_pred_sum / n_permutations,
    )


def sensitivity(
    model_predict_fn: PredictFn,
    evaluation_points: np.ndarray,
    feature_stds: np.ndarray,
    feature_names: Sequence[str] | None = None,
) -> SensitivityReport:
    """Central one-sigma perturbation response per feature, max-normalized."""
    points = np.atleast_2d(np.asarray(evaluation_points, dtype=float))
    stds = np.asarray(feature_stds, dtype=float).ravel()
    if stds.size != points.shape[1]:
        raise ValueError("feature_stds must match the feature count")
    if np.any(stds <= 0):
        raise ValueError("feature_stds must be > 0")
    names = tuple(feature_names) if feature_names else tuple(f"x{i}" for i in range(stds.size))

    responses = np.zeros(stds.size)
    for j in range(stds.size):
        up = points.copy()
        up[:, j] += stds[j]
        down = points.copy()
        down[:, j] -= stds[j]
        diff = np.asarray(model_predict_fn(up), dtype=float) - np.asarray(
            model_predict_fn(down), dtype=float
        )
        responses[j] = float(np.mean(np.abs(diff)))

    peak = responses.max()
    normalized = responses / peak if peak > 0 else np.zeros_like(responses)
    return SensitivityReport(names=names, responses=responses, normalized=normalized)
