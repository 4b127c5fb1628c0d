"""Policy-comparison study: seeded surrogate-oracle campaigns under four arms
(random vs UCB acquisition, informed vs uninformed candidate pools).

A GP classifier trained on the full labeled experiment table acts as the
ground-truth oracle. Each instance queries pool points one per cycle until a
queried point is oracle-labeled battery grade with feed Mg above the goal
threshold, or the experiment budget runs out.

The UCB learner is a fixed-kernel GP regressor on the 0/1 outcomes observed
so far; with only failures observed its posterior mean is flat and the
kappa*std term drives pure uncertainty-directed exploration, which is what
lets it beat random sampling even before the first success is seen.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .dataset import (
    FEATURE_NAMES,
    DEFAULT_GRADE_SPEC,
    ExperimentRecord,
    GradeSpec,
    feature_matrix,
    fit_scaler,
    grade_labels,
    load_bundled_dataset,
    load_bundled_grade_spec,
    training_records,
)
from .gp import GpClassifier, KernelSpec, gpc_fit, gpc_predict, kernel_matrix
from .sampling import SurrogateSpaceSpec, lhc_sample_matrix, load_bundled_spaces

_INIT_MG = FEATURE_NAMES.index("init_mg")

ARMS: tuple[tuple[str, str], ...] = (
    ("informed", "ucb"),
    ("informed", "random"),
    ("uninformed", "ucb"),
    ("uninformed", "random"),
)


@dataclass(frozen=True)
class StudyConfig:
    n_instances: int = 100
    budget: int = 40
    pool_size: int = 100_000
    base_seed: int = 2024
    kappa: float = 2.0
    success_min_init_mg: float = 200.0
    informed_label: str = "F"
    uninformed_label: str = "A"
    learner_kernel: KernelSpec = KernelSpec(
        family="matern32", length_scales=(1.5,), signal_variance=0.06
    )
    learner_alpha: float = 0.06
    oracle_restarts: int = 10
    oracle_alpha: float = 0.06
    oracle_seed: int = 7
    single_class_refit: bool = True

    def __post_init__(self):
        if self.budget < 1 or self.n_instances < 1 or self.pool_size < 1:
            raise ValueError("budget, n_instances and pool_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "budget": self.budget,
            "pool_size": self.pool_size,
            "base_seed": self.base_seed,
            "kappa": self.kappa,
            "success_min_init_mg": self.success_min_init_mg,
            "informed_label": self.informed_label,
            "uninformed_label": self.uninformed_label,
            "learner_kernel": self.learner_kernel.to_dict(),
            "learner_alpha": self.learner_alpha,
            "oracle_restarts": self.oracle_restarts,
            "oracle_alpha": self.oracle_alpha,
            "oracle_seed": self.oracle_seed,
            "single_class_refit": self.single_class_refit,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "StudyConfig":
        kwargs = dict(payload)
        if "learner_kernel" in kwargs:
            kwargs["learner_kernel"] = KernelSpec.from_dict(kwargs["learner_kernel"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "StudyConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Trajectory:
    space: str
    policy: str
    instance: int
    queries: tuple[int, ...]
    success: bool

    @property
    def n_queries(self) -> int:
        return len(self.queries)


@dataclass(eq=False)
class StudyResult:
    config: StudyConfig
    arm_stats: dict[str, dict[str, float]]  # "informed/ucb" -> stats
    trajectories: list[Trajectory]

    def rate(self, space: str, policy: str) -> float:
        return self.arm_stats[f"{space}/{policy}"]["rate"]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "arm_stats": self.arm_stats,
            "trajectories": [
                {
                    "space": t.space,
                    "policy": t.policy,
                    "instance": t.instance,
                    "n_queries": t.n_queries,
                    "success": t.success,
                    "queries": list(t.queries),
                }
                for t in self.trajectories
            ],
        }

    def rates_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["space", "policy", "successes", "instances", "rate", "ci_low", "ci_high"])
        for space, policy in ARMS:
            s = self.arm_stats[f"{space}/{policy}"]
            writer.writerow(
                [space, policy, int(s["successes"]), int(s["instances"]),
                 f"{s['rate']:.6f}", f"{s['ci_low']:.6f}", f"{s['ci_high']:.6f}"]
            )
        return buf.getvalue()

    def trajectories_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["space", "policy", "instance", "n_queries", "success"])
        for t in self.trajectories:
            writer.writerow([t.space, t.policy, t.instance, t.n_queries, int(t.success)])
        return buf.getvalue()


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# ---------------------------------------------------------------------------
# Oracle and pools


def build_oracle(
    records: Sequence[ExperimentRecord] | None = None,
    grade_spec: GradeSpec | None = None,
    rng_seed: int = 7,
    n_restarts: int = 10,
    alpha: float = 0.06,
) -> GpClassifier:
    """GP classifier trained on every non-excluded labeled record.

    Uses per-dimension length scales: the label boundary lives in a few of
    the nine condition dimensions, and an isotropic kernel reverts to the
    base rate almost everywhere off the training manifold.
    """
    if records is None:
        records = load_bundled_dataset()
    if grade_spec is None:
        grade_spec = load_bundled_grade_spec()
    recs = training_records(records)
    x = feature_matrix(recs)
    ard = KernelSpec(family="matern32", length_scales=(1.0,) * x.shape[1])
    return gpc_fit(
        x,
        grade_labels(recs, grade_spec),
        kernel=ard,
        alpha=alpha,
        rng_seed=rng_seed,
        n_restarts=n_restarts,
        feature_names=FEATURE_NAMES,
    )


def build_pools(
    informed_spec: SurrogateSpaceSpec,
    uninformed_spec: SurrogateSpaceSpec,
    pool_size: int,
    rng_seed: int,
) -> dict[str, np.ndarray]:
    """Latin-hypercube candidate pools for both study spaces."""
    seeds = np.random.SeedSequence(rng_seed).generate_state(2)
    return {
        "informed": lhc_sample_matrix(informed_spec, int(seeds[0]), n_points=pool_size),
        "uninformed": lhc_sample_matrix(uninformed_spec, int(seeds[1]), n_points=pool_size),
    }


# ---------------------------------------------------------------------------
# Single-instance campaigns


def run_instance(
    pool: np.ndarray,
    policy: str,
    oracle_labels: np.ndarray,
    success_mask: np.ndarray,
    budget: int,
    rng_seed: int,
    config: StudyConfig,
    pool_scaled: np.ndarray | None = None,
) -> tuple[tuple[int, ...], bool]:
    """One seeded campaign; returns (queried pool indices, success flag)."""
    n = pool.shape[0]
    if n == 0:
        raise ValueError("pool must be non-empty")
    rng = np.random.default_rng(rng_seed)
    if policy == "random":
        order = rng.permutation(n)[:budget]
        queries: list[int] = []
        for idx in order:
            queries.append(int(idx))
            if success_mask[idx]:
                return tuple(queries), True
        return tuple(queries), False
    if policy != "ucb":
        raise ValueError("policy must be 'random' or 'ucb'")

    if pool_scaled is None:
        pool_scaled = fit_scaler(pool).transform(pool)
    kernel = config.learner_kernel
    sigma2 = kernel.signal_variance
    alpha = config.learner_alpha
    kappa = config.kappa

    queries = []
    queried_mask = np.zeros(n, dtype=bool)
    y: list[float] = []
    # incremental Cholesky of K + alpha I over queried points, and
    # V = L^-1 K(queried, pool) maintained one row per cycle
    chol = np.zeros((budget, budget))
    k_star = np.zeros((budget, n))
    v = np.zeros((budget, n))

    def query(idx: int) -> bool:
        t = len(queries)
        queries.append(int(idx))
        queried_mask[idx] = True
        y.append(float(oracle_labels[idx]))
        row = kernel_matrix(kernel, pool_scaled[idx][None, :], pool_scaled)[0]
        k_star[t] = row
        if t == 0:
            chol[0, 0] = math.sqrt(sigma2 + alpha)
            v[0] = row / chol[0, 0]
        else:
            l_off = solve_triangular(chol[:t, :t], k_star[:t, idx], lower=True)
            diag = sigma2 + alpha - float(l_off @ l_off)
            chol[t, :t] = l_off
            chol[t, t] = math.sqrt(max(diag, 1e-12))
            v[t] = (row - l_off @ v[:t]) / chol[t, t]
        return bool(success_mask[idx])

    # cold start: two uniform draws
    for idx in rng.choice(n, size=min(2, budget), replace=False):
        if query(int(idx)):
            return tuple(queries), True

    probes_since_random = 0
    while len(queries) < budget:
        t = len(queries)
        y_arr = np.array(y)
        single_class = y_arr.min() == y_arr.max()
        if single_class and not config.single_class_refit:
            candidates = np.where(~queried_mask)[0]
            idx = int(rng.choice(candidates))
        elif single_class and probes_since_random >= 2:
            # no label contrast yet: every third query is a uniform draw so
            # interior regions stay reachable alongside the uncertainty probes
            probes_since_random = 0
            candidates = np.where(~queried_mask)[0]
            idx = int(rng.choice(candidates))
        else:
            probes_since_random += 1
            y_mean = float(y_arr.mean())
            resid = solve_triangular(chol[:t, :t], y_arr - y_mean, lower=True)
            weights = solve_triangular(chol[:t, :t].T, resid, lower=False)
            mean = y_mean + k_star[:t].T @ weights
            var = np.maximum(sigma2 - np.sum(v[:t] ** 2, axis=0), 0.0)
            scores = mean + kappa * np.sqrt(var)
            scores[queried_mask] = -np.inf
            if single_class:
                # scores are pure kappa*sigma here; sample among the most
                # uncertain candidates so instances do not all walk the same
                # deterministic probe path over a shared pool
                top = np.argpartition(scores, -64)[-64:]
                idx = int(rng.choice(top))
            else:
                idx = int(np.argmax(scores))
        if query(idx):
            return tuple(queries), True
    return tuple(queries), False


# ---------------------------------------------------------------------------
# Full study


def run_study(
    config: StudyConfig,
    records: Sequence[ExperimentRecord] | None = None,
    grade_spec: GradeSpec | None = None,
    spaces: dict[str, SurrogateSpaceSpec] | None = None,
    oracle: GpClassifier | None = None,
) -> StudyResult:
    """Execute all four arms with independent derived seeds."""
    if spaces is None:
        spaces = load_bundled_spaces()
    informed = spaces[config.informed_label]
    uninformed = spaces[config.uninformed_label]
    pool_seed = int(np.random.SeedSequence(config.base_seed).generate_state(2)[1])
    if oracle is None:
        oracle = build_oracle(
            records,
            grade_spec,
            rng_seed=config.oracle_seed,
            n_restarts=config.oracle_restarts,
            alpha=config.oracle_alpha,
        )
    pools = build_pools(informed, uninformed, config.pool_size, pool_seed)

    labels = {name: gpc_predict(oracle, pool) for name, pool in pools.items()}
    success = {
        name: labels[name] & (pools[name][:, _INIT_MG] > config.success_min_init_mg)
        for name in pools
    }
    scaled = {name: fit_scaler(pool).transform(pool) for name, pool in pools.items()}

    trajectories: list[Trajectory] = []
    arm_stats: dict[str, dict[str, float]] = {}
    for arm_index, (space_name, policy) in enumerate(ARMS):
        successes = 0
        for instance in range(config.n_instances):
            seed = int(
                np.random.SeedSequence([config.base_seed, 10 + arm_index, instance]).generate_state(1)[0]
            )
            queries, ok = run_instance(
                pools[space_name],
                policy,
                labels[space_name],
                success[space_name],
                config.budget,
                seed,
                config,
                pool_scaled=scaled[space_name],
            )
            successes += int(ok)
            trajectories.append(
                Trajectory(
                    space=space_name,
                    policy=policy,
                    instance=instance,
                    queries=queries,
                    success=ok,
                )
            )
        lo, hi = wilson_interval(successes, config.n_instances)
        arm_stats[f"{space_name}/{policy}"] = {
            "successes": float(successes),
            "instances": float(config.n_instances),
            "rate": successes / config.n_instances,
            "ci_low": lo,
            "ci_high": hi,
            "pool_true_fraction": float(success[space_name].mean()),
        }
    return StudyResult(config=config, arm_stats=arm_stats, trajectories=trajectories)


def write_study_outputs(result: StudyResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "study_result.json").write_text(
        json.dumps(result.to_dict(), indent=2), encoding="utf-8"
    )
    (out / "rates.csv").write_text(result.rates_csv(), encoding="utf-8")
    (out / "trajectories.csv").write_text(result.trajectories_csv(), encoding="utf-8")
