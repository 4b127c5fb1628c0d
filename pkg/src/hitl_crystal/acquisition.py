"""Candidate-generation strategies: Pareto exploration (non-dominated sorting
and an NSGA-II search), random-walk verification batches, decision-boundary
midpoints scored by |p - 0.5|, and upper-confidence-bound scoring.

All objectives are minimized.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dataset import (
    DEFAULT_GRADE_SPEC,
    ExperimentRecord,
    GradeSpec,
    feature_matrix,
    grade_labels,
    training_records,
)
from .errors import DegenerateLabelsError
from .gp import GpClassifier, GpModel, gpc_predict_proba, gpr_predict
from .sampling import (
    ConditionPoint,
    SurrogateSpaceSpec,
    lhc_sample_matrix,
    point_from_features,
    repair_features,
    repair_shift_fraction,
)

REVIEW_STATUSES = ("Proposed", "Approved", "Rejected", "Edited")

STRATEGIES = (
    "pareto_exploration",
    "random_walk_verification",
    "boundary_midpoint",
    "ucb",
    "manual",
)


@dataclass
class Candidate:
    candidate_id: int
    point: ConditionPoint
    predictions: dict[str, float]
    score: float
    review_status: str = "Proposed"

    def to_dict(self) -> dict:
        return {
            "candidate_id": self.candidate_id,
            "point": self.point.to_dict(),
            "predictions": dict(self.predictions),
            "score": self.score,
            "review_status": self.review_status,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Candidate":
        return cls(
            candidate_id=int(payload["candidate_id"]),
            point=ConditionPoint.from_dict(payload["point"]),
            predictions={k: float(v) for k, v in payload["predictions"].items()},
            score=float(payload["score"]),
            review_status=str(payload.get("review_status", "Proposed")),
        )


@dataclass
class CandidateBatch:
    batch_id: int
    strategy: str
    candidates: list[Candidate]
    iteration: int | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if not self.candidates:
            raise ValueError("a candidate batch must contain at least one candidate")
        for c in self.candidates:
            if not np.isfinite(c.score):
                raise ValueError("candidate scores must be finite")

    def candidate(self, candidate_id: int) -> Candidate:
        for c in self.candidates:
            if c.candidate_id == candidate_id:
                return c
        raise KeyError(f"no candidate {candidate_id} in batch {self.batch_id}")

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "strategy": self.strategy,
            "candidates": [c.to_dict() for c in self.candidates],
            "iteration": self.iteration,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CandidateBatch":
        return cls(
            batch_id=int(payload["batch_id"]),
            strategy=str(payload["strategy"]),
            candidates=[Candidate.from_dict(c) for c in payload["candidates"]],
            iteration=payload.get("iteration"),
            notes=tuple(payload.get("notes", ())),
        )


@dataclass(eq=False)
class ParetoFront:
    x: np.ndarray  # (n, d) decision vectors
    objectives: np.ndarray  # (n, m) predicted objective values
    objective_names: tuple[str, ...]
    points: list[ConditionPoint] | None = None
    stds: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.objectives.shape[0]


# ---------------------------------------------------------------------------
# Non-dominated sorting


def _dominance_matrix(f: np.ndarray, chunk: int = 512) -> np.ndarray:
    """dom[i, j] is True when point i dominates point j (minimization)."""
    n = f.shape[0]
    dom = np.zeros((n, n), dtype=bool)
    for start in range(0, n, chunk):
        block = f[start : start + chunk]
        le = np.all(block[:, None, :] <= f[None, :, :], axis=2)
        lt = np.any(block[:, None, :] < f[None, :, :], axis=2)
        dom[start : start + chunk] = le & lt
    return dom


def non_dominated_sort(objectives: np.ndarray) -> list[list[int]]:
    """Fronts of indices; front 0 is the non-dominated set. Stable order."""
    f = np.atleast_2d(np.asarray(objectives, dtype=float))
    if f.shape[0] == 0:
        raise ValueError("need at least one point")
    dom = _dominance_matrix(f)
    count = dom.sum(axis=0).astype(int)
    remaining = np.ones(f.shape[0], dtype=bool)
    fronts: list[list[int]] = []
    while remaining.any():
        current = np.where(remaining & (count == 0))[0]
        fronts.append([int(i) for i in current])
        remaining[current] = False
        count -= dom[current].sum(axis=0)
    return fronts


def pareto_mask_2d(objectives: np.ndarray) -> np.ndarray:
    """Fast non-dominated mask for exactly two minimized objectives."""
    f = np.atleast_2d(np.asarray(objectives, dtype=float))
    if f.shape[1] != 2:
        raise ValueError("pareto_mask_2d needs exactly 2 objectives")
    order = np.lexsort((f[:, 1], f[:, 0]))
    mask = np.zeros(f.shape[0], dtype=bool)
    best_f2 = np.inf
    for i in order:
        if f[i, 1] < best_f2:
            mask[i] = True
            best_f2 = f[i, 1]
    return mask


def crowding_distance(objectives: np.ndarray) -> np.ndarray:
    f = np.atleast_2d(np.asarray(objectives, dtype=float))
    n, m = f.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for j in range(m):
        order = np.argsort(f[:, j], kind="stable")
        span = f[order[-1], j] - f[order[0], j]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span <= 0:
            continue
        dist[order[1:-1]] += (f[order[2:], j] - f[order[:-2], j]) / span
    return dist


def hypervolume_2d(objectives: np.ndarray, reference: tuple[float, float]) -> float:
    """Dominated hypervolume against a reference point (2 objectives, min)."""
    f = np.atleast_2d(np.asarray(objectives, dtype=float))
    f = f[pareto_mask_2d(f)]
    f = f[(f[:, 0] < reference[0]) & (f[:, 1] < reference[1])]
    if f.shape[0] == 0:
        return 0.0
    f = f[np.argsort(f[:, 0], kind="stable")]
    hv = 0.0
    prev_f2 = reference[1]
    for f1, f2 in f:
        hv += (reference[0] - f1) * (prev_f2 - f2)
        prev_f2 = f2
    return float(hv)


# ---------------------------------------------------------------------------
# NSGA-II


def _sbx_crossover(
    parents_a: np.ndarray, parents_b: np.ndarray, bounds: np.ndarray, eta: float, rng
) -> tuple[np.ndarray, np.ndarray]:
    u = rng.random(parents_a.shape)
    beta = np.where(
        u <= 0.5, (2.0 * u) ** (1.0 / (eta + 1.0)), (0.5 / (1.0 - u)) ** (1.0 / (eta + 1.0))
    )
    swap = rng.random(parents_a.shape) < 0.5
    beta = np.where(swap, beta, 1.0)
    c1 = 0.5 * ((1 + beta) * parents_a + (1 - beta) * parents_b)
    c2 = 0.5 * ((1 - beta) * parents_a + (1 + beta) * parents_b)
    return (
        np.clip(c1, bounds[:, 0], bounds[:, 1]),
        np.clip(c2, bounds[:, 0], bounds[:, 1]),
    )


def _polynomial_mutation(
    x: np.ndarray, bounds: np.ndarray, eta: float, rate: float, rng
) -> np.ndarray:
    u = rng.random(x.shape)
    do = rng.random(x.shape) < rate
    delta = np.where(
        u < 0.5,
        (2.0 * u) ** (1.0 / (eta + 1.0)) - 1.0,
        1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta + 1.0)),
    )
    width = bounds[:, 1] - bounds[:, 0]
    out = np.where(do, x + delta * width, x)
    return np.clip(out, bounds[:, 0], bounds[:, 1])


def _rank_and_crowding(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    fronts = non_dominated_sort(f)
    rank = np.zeros(f.shape[0], dtype=int)
    crowd = np.zeros(f.shape[0])
    for level, front in enumerate(fronts):
        rank[front] = level
        crowd[front] = crowding_distance(f[front])
    return rank, crowd


def nsga2(
    objective_fn: Callable[[np.ndarray], np.ndarray],
    bounds: np.ndarray,
    population: int = 100,
    generations: int = 200,
    rng_seed: int = 0,
    repair_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    init: np.ndarray | None = None,
    sbx_eta: float = 15.0,
    mutation_eta: float = 20.0,
    mutation_rate: float | None = None,
    hypervolume_ref: tuple[float, float] | None = None,
) -> ParetoFront:
    """Standard NSGA-II loop with SBX crossover and polynomial mutation.

    ``objective_fn`` maps an (n, d) matrix to an (n, m) objective matrix.
    ``repair_fn`` projects rows back into the feasible set after variation.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    d = bounds.shape[0]
    rate = mutation_rate if mutation_rate is not None else 1.0 / d
    rng = np.random.default_rng(rng_seed)

    def repair(x: np.ndarray) -> np.ndarray:
        x = np.clip(x, bounds[:, 0], bounds[:, 1])
        if repair_fn is not None:
            x = np.array([repair_fn(row) for row in x])
        return x

    if init is not None:
        x = repair(np.array(init, dtype=float))
    else:
        x = repair(bounds[:, 0] + rng.random((population, d)) * (bounds[:, 1] - bounds[:, 0]))
    f = np.atleast_2d(np.asarray(objective_fn(x), dtype=float))

    hv_history: list[float] = []
    rank, crowd = _rank_and_crowding(f)

    # archive of every non-dominated point seen so far; crowding truncation
    # can evict front members from the population, so the archive is what
    # guarantees monotone front quality across generations
    archive_x = x[rank == 0].copy()
    archive_f = f[rank == 0].copy()

    def merge_archive(ax, af, px, pf):
        union_x = np.vstack([ax, px])
        union_f = np.vstack([af, pf])
        union_x, keep_idx = np.unique(union_x, axis=0, return_index=True)
        union_f = union_f[keep_idx]
        if union_f.shape[1] == 2:
            mask = pareto_mask_2d(union_f)
        else:
            mask = np.zeros(union_f.shape[0], dtype=bool)
            mask[non_dominated_sort(union_f)[0]] = True
        return union_x[mask], union_f[mask]

    for _ in range(generations):
        # binary tournament on (rank, crowding)
        a = rng.integers(0, population, size=population)
        b = rng.integers(0, population, size=population)
        better = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] > crowd[b]))
        parents = np.where(better, a, b)
        shuffled = rng.permutation(parents)
        pa, pb = x[shuffled[0::2]], x[shuffled[1::2]]
        c1, c2 = _sbx_crossover(pa, pb, bounds, sbx_eta, rng)
        offspring = np.vstack([c1, c2])
        offspring = _polynomial_mutation(offspring, bounds, mutation_eta, rate, rng)
        offspring = repair(offspring)
        f_off = np.atleast_2d(np.asarray(objective_fn(offspring), dtype=float))

        x_all = np.vstack([x, offspring])
        f_all = np.vstack([f, f_off])
        fronts = non_dominated_sort(f_all)
        chosen: list[int] = []
        for front in fronts:
            if len(chosen) + len(front) <= population:
                chosen.extend(front)
            else:
                cd = crowding_distance(f_all[front])
                order = np.argsort(-cd, kind="stable")
                chosen.extend(int(front[i]) for i in order[: population - len(chosen)])
                break
        x, f = x_all[chosen], f_all[chosen]
        rank, crowd = _rank_and_crowding(f)
        archive_x, archive_f = merge_archive(archive_x, archive_f, x[rank == 0], f[rank == 0])
        if hypervolume_ref is not None and f.shape[1] == 2:
            hv_history.append(hypervolume_2d(archive_f, hypervolume_ref))

    order = np.argsort(archive_f[:, 0], kind="stable")
    return ParetoFront(
        x=archive_x[order],
        objectives=archive_f[order],
        objective_names=tuple(f"objective_{i}" for i in range(f.shape[1])),
        metadata={
            "population": population,
            "generations": generations,
            "rng_seed": rng_seed,
            "hypervolume_history": hv_history,
        },
    )


def nsga2_pareto(
    objective_fn: Callable[[np.ndarray], np.ndarray],
    spec: SurrogateSpaceSpec,
    population: int = 100,
    generations: int = 200,
    rng_seed: int = 0,
    objective_names: tuple[str, ...] = ("final_mg", "final_ca"),
) -> ParetoFront:
    """NSGA-II over a surrogate space with constraint repair; returns front 0
    as condition points."""
    init = lhc_sample_matrix(spec, rng_seed, n_points=population)
    front = nsga2(
        objective_fn,
        spec.bounds(),
        population=population,
        generations=generations,
        rng_seed=rng_seed,
        repair_fn=lambda row: repair_features(spec, row),
        init=init,
    )
    points = [
        point_from_features(row, "pareto", seed_origin=i) for i, row in enumerate(front.x)
    ]
    return replace_front(front, points=points, objective_names=objective_names)


def replace_front(front: ParetoFront, **changes) -> ParetoFront:
    payload = {
        "x": front.x,
        "objectives": front.objectives,
        "objective_names": front.objective_names,
        "points": front.points,
        "stds": front.stds,
        "metadata": front.metadata,
    }
    payload.update(changes)
    return ParetoFront(**payload)


def front_from_predictions(
    points: Sequence[ConditionPoint],
    x: np.ndarray,
    means: np.ndarray,
    stds: np.ndarray | None = None,
    objective_names: tuple[str, ...] = ("final_mg", "final_ca"),
) -> ParetoFront:
    """Extract front 0 from predicted objectives over a sampled space."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    if means.shape[1] == 2:
        mask = pareto_mask_2d(means)
    else:
        mask = np.zeros(means.shape[0], dtype=bool)
        mask[non_dominated_sort(means)[0]] = True
    idx = np.where(mask)[0]
    return ParetoFront(
        x=np.asarray(x)[idx],
        objectives=means[idx],
        objective_names=objective_names,
        points=[points[i] for i in idx],
        stds=None if stds is None else np.atleast_2d(stds)[idx],
        metadata={"source_size": means.shape[0]},
    )


# ---------------------------------------------------------------------------
# Candidate selection


def pareto_candidates(front: ParetoFront, k: int, batch_id: int = 0) -> CandidateBatch:
    """Subsample k spread-out front members (farthest-point, extremes first)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    f = front.objectives
    notes: tuple[str, ...] = ()
    if k >= front.size:
        selected = list(range(front.size))
        if k > front.size:
            notes = (f"requested {k} candidates but the front has {front.size}",)
    else:
        span = f.max(axis=0) - f.min(axis=0)
        span[span <= 0] = 1.0
        norm = (f - f.min(axis=0)) / span
        extremes = [int(np.argmin(f[:, 0]))]
        ext2 = int(np.argmin(f[:, 1])) if f.shape[1] > 1 else extremes[0]
        if ext2 not in extremes:
            extremes.append(ext2)
        selected = extremes[:k]
        while len(selected) < k:
            dists = np.min(
                np.linalg.norm(norm[:, None, :] - norm[None, selected, :], axis=2), axis=1
            )
            dists[selected] = -np.inf
            selected.append(int(np.argmax(dists)))

    candidates = []
    for order, idx in enumerate(selected):
        point = (
            front.points[idx]
            if front.points is not None
            else point_from_features(front.x[idx], "pareto", seed_origin=idx)
        )
        preds = {
            name: float(front.objectives[idx, j])
            for j, name in enumerate(front.objective_names)
        }
        if front.stds is not None:
            preds.update(
                {
                    f"{name}_std": float(front.stds[idx, j])
                    for j, name in enumerate(front.objective_names)
                }
            )
        candidates.append(
            Candidate(candidate_id=order, point=point, predictions=preds, score=float(order))
        )
    return CandidateBatch(
        batch_id=batch_id, strategy="pareto_exploration", candidates=candidates, notes=notes
    )


def boundary_midpoints(
    records: Sequence[ExperimentRecord],
    clf: GpClassifier,
    k: int,
    grade_spec: GradeSpec = DEFAULT_GRADE_SPEC,
    space: SurrogateSpaceSpec | None = None,
    batch_id: int = 0,
    dedup_tol: float = 1e-6,
    max_repair_shift: float = 0.10,
) -> CandidateBatch:
    """Midpoints between each failing record and its nearest passing record,
    ranked by distance of the predicted battery-grade probability from 0.5."""
    recs = training_records(records)
    labels = grade_labels(recs, grade_spec)
    if labels.all() or not labels.any():
        raise DegenerateLabelsError("boundary midpoints need both grade classes")

    x = feature_matrix(recs)
    xs = clf.inner.scaler.transform(x)
    false_idx = np.where(~labels)[0]
    true_idx = np.where(labels)[0]

    mids: list[np.ndarray] = []
    notes: list[str] = []
    for i in false_idx:
        dists = np.linalg.norm(xs[true_idx] - xs[i], axis=1)
        j = true_idx[int(np.argmin(dists))]
        mid = 0.5 * (x[i] + x[j])
        if space is not None:
            repaired = repair_features(space, mid)
            if repair_shift_fraction(space, mid, repaired) > max_repair_shift:
                notes.append(
                    f"midpoint for record {recs[i].exp_id} dropped: repair moved it "
                    f">{max_repair_shift:.0%} of a dimension range"
                )
                continue
            mid = repaired
        mids.append(mid)

    if not mids:
        raise ValueError("no feasible midpoints after constraint repair")
    mid_matrix = np.array(mids)

    # dedupe in scaled space
    mid_scaled = clf.inner.scaler.transform(mid_matrix)
    keep: list[int] = []
    for i in range(mid_matrix.shape[0]):
        if all(np.linalg.norm(mid_scaled[i] - mid_scaled[j]) > dedup_tol for j in keep):
            keep.append(i)
    mid_matrix = mid_matrix[keep]

    proba = gpc_predict_proba(clf, mid_matrix)
    scores = np.abs(proba - 0.5)
    order = np.argsort(scores, kind="stable")[: max(k, 1)]
    candidates = [
        Candidate(
            candidate_id=rank,
            point=point_from_features(mid_matrix[i], "midpoint", seed_origin=int(i)),
            predictions={"battery_grade_probability": float(proba[i])},
            score=float(scores[i]),
        )
        for rank, i in enumerate(order)
    ]
    if k > len(candidates):
        notes.append(f"requested {k} midpoints but only {len(candidates)} available")
    return CandidateBatch(
        batch_id=batch_id,
        strategy="boundary_midpoint",
        candidates=candidates,
        notes=tuple(notes),
    )


def batch_to_csv(batch: CandidateBatch) -> str:
    """Flat CSV export of a candidate batch (one row per candidate)."""
    import csv as _csv
    import io as _io

    from .dataset import FEATURE_NAMES

    pred_keys = sorted({k for c in batch.candidates for k in c.predictions})
    buf = _io.StringIO()
    writer = _csv.writer(buf)
    writer.writerow(
        ["batch_id", "strategy", "candidate_id", "review_status", "score"]
        + list(FEATURE_NAMES)
        + pred_keys
    )
    for c in batch.candidates:
        features = c.point.features()
        writer.writerow(
            [batch.batch_id, batch.strategy, c.candidate_id, c.review_status, repr(c.score)]
            + [repr(float(v)) for v in features]
            + [("" if k not in c.predictions else repr(c.predictions[k])) for k in pred_keys]
        )
    return buf.getvalue()


def ucb_scores(
    model: GpModel | GpClassifier, points: np.ndarray, kappa: float = 2.0
) -> np.ndarray:
    """mean + kappa * std per point (classifier scores use the raw inner mean)."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    inner = model.inner if isinstance(model, GpClassifier) else model
    mean, std = gpr_predict(inner, points)
    return mean + kappa * std
