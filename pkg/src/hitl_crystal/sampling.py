"""Surrogate-space generation: constrained Latin hypercube sampling and the
random-walk probe sampler used for design-bias verification.

A surrogate space is a box over the nine condition dimensions (four process
controls, five feed concentrations) plus two hard constraints: a minimum
reactor temperature differential and a cap on the summed feed concentrations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .dataset import FEATURE_NAMES, Composition, ProcessControls
from .errors import InfeasibleSpaceError

# Feature-vector layout (see dataset.FEATURE_NAMES):
# 0 t_cold, 1 t_hot, 2 flow_rate, 3 slurry_concentration, 4..8 init ca/k/li/mg/na
_T_COLD, _T_HOT = 0, 1
_ELEMENT_IDX = np.arange(4, 9)

_STRATUM_RETRIES = 60
_FALLBACK_DRAWS = 2000

PROVENANCE_VALUES = ("lhc", "random_walk", "manual", "pareto", "midpoint")


@dataclass(frozen=True)
class SurrogateSpaceSpec:
    """Per-dimension bounds plus hard constraints for condition sampling."""

    label: str
    dimensions: dict[str, tuple[float, float]]
    n_points: int = 1000
    min_delta_t: float = 2.0
    max_element_sum: float = 1_000_000.0

    def __post_init__(self):
        missing = [n for n in FEATURE_NAMES if n not in self.dimensions]
        if missing:
            raise ValueError(f"space {self.label!r} missing dimensions: {missing}")
        unknown = [n for n in self.dimensions if n not in FEATURE_NAMES]
        if unknown:
            raise ValueError(f"space {self.label!r} has unknown dimensions: {unknown}")
        for name, (lo, hi) in self.dimensions.items():
            if not lo < hi:
                raise ValueError(f"dimension {name}: min {lo} must be < max {hi}")
        if self.min_delta_t < 0:
            raise ValueError("min_delta_t must be >= 0")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")

    def bounds(self) -> np.ndarray:
        """(9, 2) array of [min, max] in canonical feature order."""
        return np.array([self.dimensions[name] for name in FEATURE_NAMES], dtype=float)

    def satisfies(self, x: np.ndarray) -> np.ndarray:
        """Constraint mask for an (n, 9) matrix (bounds not included)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        delta_ok = x[:, _T_HOT] - x[:, _T_COLD] >= self.min_delta_t
        strict = x[:, _T_HOT] > x[:, _T_COLD]  # physical even when min_delta_t == 0
        sum_ok = x[:, _ELEMENT_IDX].sum(axis=1) <= self.max_element_sum
        return delta_ok & strict & sum_ok

    def in_bounds(self, x: np.ndarray, atol: float = 1e-9) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        b = self.bounds()
        return np.all((x >= b[:, 0] - atol) & (x <= b[:, 1] + atol), axis=1)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_points": self.n_points,
            "min_delta_t": self.min_delta_t,
            "max_element_sum": self.max_element_sum,
            "dimensions": {name: list(self.dimensions[name]) for name in FEATURE_NAMES},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SurrogateSpaceSpec":
        return cls(
            label=str(payload["label"]),
            dimensions={k: (float(v[0]), float(v[1])) for k, v in payload["dimensions"].items()},
            n_points=int(payload.get("n_points", 1000)),
            min_delta_t=float(payload.get("min_delta_t", 2.0)),
            max_element_sum=float(payload.get("max_element_sum", 1_000_000.0)),
        )


@dataclass(frozen=True)
class ConditionPoint:
    """A proposed experimental condition (feed purity is not yet known)."""

    controls: ProcessControls
    initial: Composition
    provenance: str = "manual"
    seed_origin: int | None = None

    def __post_init__(self):
        if self.provenance not in PROVENANCE_VALUES:
            raise ValueError(
                f"provenance must be one of {PROVENANCE_VALUES}, got {self.provenance!r}"
            )

    def features(self) -> np.ndarray:
        c, i = self.controls, self.initial
        return np.array(
            [c.t_cold, c.t_hot, c.flow_rate, c.slurry_concentration, i.ca, i.k, i.li, i.mg, i.na]
        )

    def to_dict(self) -> dict:
        return {
            "features": {name: float(v) for name, v in zip(FEATURE_NAMES, self.features())},
            "provenance": self.provenance,
            "seed_origin": self.seed_origin,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ConditionPoint":
        vec = np.array([payload["features"][name] for name in FEATURE_NAMES], dtype=float)
        origin = payload.get("seed_origin")
        return point_from_features(
            vec, payload.get("provenance", "manual"), None if origin is None else int(origin)
        )


def point_from_features(
    vec: np.ndarray, provenance: str = "manual", seed_origin: int | None = None
) -> ConditionPoint:
    vec = np.asarray(vec, dtype=float).ravel()
    if vec.shape != (len(FEATURE_NAMES),):
        raise ValueError(f"expected a {len(FEATURE_NAMES)}-vector, got shape {vec.shape}")
    controls = ProcessControls(
        t_cold=vec[0], t_hot=vec[1], flow_rate=vec[2], slurry_concentration=vec[3]
    )
    initial = Composition(ca=vec[4], k=vec[5], li=vec[6], mg=vec[7], na=vec[8])
    return ConditionPoint(
        controls=controls, initial=initial, provenance=provenance, seed_origin=seed_origin
    )


def points_to_matrix(points: Sequence[ConditionPoint]) -> np.ndarray:
    return np.array([p.features() for p in points]).reshape(len(points), len(FEATURE_NAMES))


@dataclass(frozen=True)
class WalkConfig:
    """Random-walk probe configuration anchored on a set of reference points."""

    anchor_points: tuple[ConditionPoint, ...]
    n_walkers: int = 100_000
    steps_per_walker: int = 1
    step_fraction: float = 0.25
    n_output: int = 5000

    def __post_init__(self):
        if not self.anchor_points:
            raise ValueError("anchor_points must be non-empty")
        # step_fraction 0 is allowed as the degenerate no-move walk
        if not 0.0 <= self.step_fraction <= 1.0:
            raise ValueError("step_fraction must be in [0, 1]")
        if self.n_walkers < 1 or self.steps_per_walker < 1:
            raise ValueError("n_walkers and steps_per_walker must be >= 1")
        if self.n_output < 1 or self.n_output > self.n_walkers * self.steps_per_walker:
            raise ValueError("need 1 <= n_output <= n_walkers * steps_per_walker")


# ---------------------------------------------------------------------------
# Latin hypercube sampling with in-stratum constraint repair


def lhc_matrix(n: int, bounds: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Stratified sample: one point per equal-width stratum in every dimension.

    Returns (points, strata) where strata[i, j] is the stratum index of point
    i along dimension j.
    """
    bounds = np.asarray(bounds, dtype=float)
    d = bounds.shape[0]
    strata = np.stack([rng.permutation(n) for _ in range(d)], axis=1)
    u = rng.random((n, d))
    lo, width = bounds[:, 0], bounds[:, 1] - bounds[:, 0]
    return lo + (strata + u) / n * width, strata


def lhc_sample(spec: SurrogateSpaceSpec, rng_seed: int) -> list[ConditionPoint]:
    """Constrained Latin hypercube sample of spec.n_points conditions.

    Constraint violations are repaired by redrawing the offending coordinates
    inside their assigned strata, which preserves stratification; points whose
    stratum cell is infeasible fall back to plain rejection sampling in the
    box. Deterministic for a fixed seed.
    """
    x = lhc_sample_matrix(spec, rng_seed)
    return [point_from_features(row, "lhc", seed_origin=i) for i, row in enumerate(x)]


def lhc_sample_matrix(
    spec: SurrogateSpaceSpec, rng_seed: int, n_points: int | None = None
) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    n = spec.n_points if n_points is None else int(n_points)
    bounds = spec.bounds()
    lo, width = bounds[:, 0], bounds[:, 1] - bounds[:, 0]
    x, strata = lhc_matrix(n, bounds, rng)
    attempts = n

    bad = ~spec.satisfies(x)
    for _ in range(_STRATUM_RETRIES):
        if not bad.any():
            break
        rows = np.where(bad)[0]
        attempts += rows.size
        delta_bad = x[rows, _T_HOT] - x[rows, _T_COLD] < spec.min_delta_t
        delta_bad |= x[rows, _T_HOT] <= x[rows, _T_COLD]
        sum_bad = x[rows][:, _ELEMENT_IDX].sum(axis=1) > spec.max_element_sum
        for cols, mask in (
            (np.array([_T_COLD, _T_HOT]), delta_bad),
            (_ELEMENT_IDX, sum_bad),
        ):
            sel = rows[mask]
            if sel.size == 0:
                continue
            u = rng.random((sel.size, cols.size))
            x[np.ix_(sel, cols)] = lo[cols] + (strata[np.ix_(sel, cols)] + u) / n * width[cols]
        bad = ~spec.satisfies(x)

    # Stratum cells that stayed infeasible: plain rejection sampling in the box.
    for row in np.where(bad)[0]:
        for _ in range(_FALLBACK_DRAWS):
            attempts += 1
            candidate = lo + rng.random(bounds.shape[0]) * width
            if spec.satisfies(candidate[None, :])[0]:
                x[row] = candidate
                break
        else:
            raise InfeasibleSpaceError(
                f"space {spec.label!r}: constraints rejected a fallback cell after "
                f"{_FALLBACK_DRAWS} draws",
                acceptance_rate=n / attempts,
            )

    acceptance = n / attempts
    if acceptance < 0.01:
        raise InfeasibleSpaceError(
            f"space {spec.label!r} is effectively infeasible "
            f"(acceptance rate {acceptance:.4%})",
            acceptance_rate=acceptance,
        )
    return x


# ---------------------------------------------------------------------------
# Random-walk verification sampler


def random_walk(
    config: WalkConfig, spec: SurrogateSpaceSpec, rng_seed: int
) -> list[ConditionPoint]:
    """Scatter walkers around the anchor hull and keep constraint-valid visits.

    Every step perturbs each dimension by uniform(-f, f) times that
    dimension's anchor-set range; positions are clamped to the anchor hull
    expanded by f, with concentrations floored at zero.
    """
    anchors = points_to_matrix(config.anchor_points)
    if not np.all(spec.in_bounds(anchors)):
        raise ValueError("anchor points must lie within the surrogate space bounds")

    rng = np.random.default_rng(rng_seed)
    amin, amax = anchors.min(axis=0), anchors.max(axis=0)
    arange = amax - amin
    f = config.step_fraction
    lo_clamp = amin - f * arange
    hi_clamp = amax + f * arange
    lo_clamp[_ELEMENT_IDX] = np.maximum(lo_clamp[_ELEMENT_IDX], 0.0)
    # flow rate and slurry concentration are strictly positive quantities
    lo_clamp[2] = max(lo_clamp[2], 1e-6)
    lo_clamp[3] = max(lo_clamp[3], 1e-6)
    # temperatures stay inside the spec box expanded by the same margin
    spec_bounds = spec.bounds()
    for t in (_T_COLD, _T_HOT):
        lo_clamp[t] = max(lo_clamp[t], spec_bounds[t, 0] - f * arange[t])
        hi_clamp[t] = min(hi_clamp[t], spec_bounds[t, 1] + f * arange[t])
    lo_clamp[_T_COLD] = max(lo_clamp[_T_COLD], 0.0)

    start_idx = rng.integers(0, anchors.shape[0], size=config.n_walkers)
    pos = anchors[start_idx].copy()
    visited: list[np.ndarray] = []
    origins: list[np.ndarray] = []
    for _ in range(config.steps_per_walker):
        step = rng.uniform(-f, f, size=pos.shape) * arange
        pos = np.clip(pos + step, lo_clamp, hi_clamp)
        ok = spec.satisfies(pos)
        visited.append(pos[ok].copy())
        origins.append(start_idx[ok])

    valid = np.vstack(visited) if visited else np.empty((0, anchors.shape[1]))
    valid_origins = np.concatenate(origins) if origins else np.empty(0, dtype=int)
    if valid.shape[0] == 0:
        raise InfeasibleSpaceError("random walk produced no constraint-valid positions")
    if valid.shape[0] < config.n_output:
        raise InfeasibleSpaceError(
            f"random walk produced only {valid.shape[0]} valid positions "
            f"but n_output={config.n_output}"
        )
    sel = rng.choice(valid.shape[0], size=config.n_output, replace=False)
    return [
        point_from_features(valid[i], "random_walk", seed_origin=int(valid_origins[i]))
        for i in sel
    ]


# ---------------------------------------------------------------------------
# Constraint repair for derived candidates (midpoints, evolved points)


def repair_features(spec: SurrogateSpaceSpec, vec: np.ndarray) -> np.ndarray:
    """Project a feature vector into the spec's box and constraint set.

    Clips to bounds, raises t_hot to honor the temperature differential
    (lowering t_cold when t_hot hits its ceiling), and rescales feed
    concentrations when their sum exceeds the cap.
    """
    bounds = spec.bounds()
    x = np.clip(np.asarray(vec, dtype=float).copy(), bounds[:, 0], bounds[:, 1])
    min_dt = max(spec.min_delta_t, 1e-9)
    if x[_T_HOT] - x[_T_COLD] < min_dt:
        x[_T_HOT] = min(x[_T_COLD] + min_dt, bounds[_T_HOT, 1])
        if x[_T_HOT] - x[_T_COLD] < min_dt:
            x[_T_COLD] = max(x[_T_HOT] - min_dt, bounds[_T_COLD, 0])
    total = x[_ELEMENT_IDX].sum()
    if total > spec.max_element_sum:
        x[_ELEMENT_IDX] *= spec.max_element_sum / total
        x[_ELEMENT_IDX] = np.maximum(x[_ELEMENT_IDX], bounds[_ELEMENT_IDX, 0])
    return x


def repair_shift_fraction(spec: SurrogateSpaceSpec, before: np.ndarray, after: np.ndarray) -> float:
    """Largest per-dimension move of a repair, as a fraction of that dimension's range."""
    bounds = spec.bounds()
    width = bounds[:, 1] - bounds[:, 0]
    return float(np.max(np.abs(np.asarray(after) - np.asarray(before)) / width))


# ---------------------------------------------------------------------------
# Space / point serialization


def spaces_to_json(specs: Sequence[SurrogateSpaceSpec]) -> str:
    return json.dumps({"spaces": [s.to_dict() for s in specs]}, indent=2)


def spaces_from_json(text: str) -> dict[str, SurrogateSpaceSpec]:
    payload = json.loads(text)
    specs = [SurrogateSpaceSpec.from_dict(item) for item in payload["spaces"]]
    return {s.label: s for s in specs}


def load_spaces(path: str | Path) -> dict[str, SurrogateSpaceSpec]:
    return spaces_from_json(Path(path).read_text(encoding="utf-8"))


def load_bundled_spaces() -> dict[str, SurrogateSpaceSpec]:
    text = resources.files("hitl_crystal").joinpath("data").joinpath("table_s3.json").read_text(
        encoding="utf-8"
    )
    return spaces_from_json(text)


def write_points_csv(points: Sequence[ConditionPoint], dest: str | Path | TextIO) -> None:
    def _write(stream: TextIO) -> None:
        stream.write(",".join(FEATURE_NAMES + ("provenance", "seed_origin")) + "\n")
        for p in points:
            cells = [repr(float(v)) for v in p.features()]
            cells.append(p.provenance)
            cells.append("" if p.seed_origin is None else str(p.seed_origin))
            stream.write(",".join(cells) + "\n")

    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8") as handle:
            _write(handle)
    else:
        _write(dest)


def read_points_csv(source: str | Path | TextIO) -> list[ConditionPoint]:
    import csv as _csv

    def _read(stream: TextIO) -> list[ConditionPoint]:
        reader = _csv.DictReader(stream)
        out = []
        for row in reader:
            vec = np.array([float(row[name]) for name in FEATURE_NAMES])
            origin = row.get("seed_origin") or None
            out.append(
                point_from_features(
                    vec, row.get("provenance", "manual"), None if origin is None else int(origin)
                )
            )
        return out

    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as handle:
            return _read(handle)
    return _read(source)
