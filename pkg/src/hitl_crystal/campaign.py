"""The human-in-the-loop campaign loop: event-sourced state, per-iteration
model training and candidate generation, review gates, and atomic JSON
persistence with an append-only event log.

Every mutation is validated first, then recorded as an event and applied, so
a failed operation leaves the state untouched and replaying the event log
from an empty state reconstructs the live state exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis
from .acquisition import (
    Candidate,
    CandidateBatch,
    ParetoFront,
    boundary_midpoints,
    front_from_predictions,
    nsga2_pareto,
    pareto_candidates,
    ucb_scores,
)
from .config import DEFAULT_CONFIG, CampaignConfig
from .dataset import (
    FEATURE_NAMES,
    ExperimentRecord,
    GradeSpec,
    feature_matrix,
    grade_labels,
    label_grade,
    record_from_dict,
    record_to_dict,
    target_vector,
    training_records,
)
from .errors import DegenerateLabelsError
from .forest import ForestHyperparams, forest_fit, forest_predict
from .gp import GpClassifier, GpModel, gpc_fit, gpc_predict_proba, gpr_fit, gpr_loo_rmse, gpr_predict
from .sampling import (
    ConditionPoint,
    SurrogateSpaceSpec,
    WalkConfig,
    lhc_sample_matrix,
    point_from_features,
    points_to_matrix,
    random_walk,
)

PHASES = ("exploration", "exploitation")

GPR_TARGETS = ("final_ca", "final_k", "final_li", "final_mg", "final_na")

STRATEGY_ALIASES = {
    "pareto": "pareto_exploration",
    "walk": "random_walk_verification",
    "midpoint": "boundary_midpoint",
    "ucb": "ucb",
}


@dataclass
class CampaignState:
    records: list[ExperimentRecord] = field(default_factory=list)
    grade_spec: GradeSpec = field(default_factory=GradeSpec)
    spaces: dict[str, SurrogateSpaceSpec] = field(default_factory=dict)
    active_space: str | None = None
    phase: str = "exploration"
    iteration: int = 0
    batches: list[CandidateBatch] = field(default_factory=list)
    model_snapshots: dict[str, dict] = field(default_factory=dict)  # iteration -> payload
    reports: dict[str, dict] = field(default_factory=dict)
    record_labels: dict[str, bool] = field(default_factory=dict)  # exp_id -> battery grade
    record_links: dict[str, list | None] = field(default_factory=dict)
    last_front: list[dict] | None = None  # condition-point dicts of the latest front
    events: list[dict] = field(default_factory=list)

    @property
    def version(self) -> int:
        return len(self.events)

    def space(self) -> SurrogateSpaceSpec:
        if self.active_space is None:
            raise ValueError("no active surrogate space; add and activate one first")
        return self.spaces[self.active_space]

    def batch(self, batch_id: int) -> CandidateBatch:
        for b in self.batches:
            if b.batch_id == batch_id:
                return b
        raise KeyError(f"no batch {batch_id}")


def new_campaign(grade_spec: GradeSpec | None = None) -> CampaignState:
    return CampaignState(grade_spec=grade_spec or GradeSpec())


# ---------------------------------------------------------------------------
# Events


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _make_event(state: CampaignState, event_type: str, payload: dict) -> dict:
    return {"seq": len(state.events), "ts": _now(), "type": event_type, "payload": payload}


def apply_event(state: CampaignState, event: dict) -> CampaignState:
    """Apply one event in place. Events are assumed validated at creation."""
    payload = event["payload"]
    etype = event["type"]
    if etype == "record_added":
        record = record_from_dict(payload["record"])
        state.records.append(record)
        state.record_labels[str(record.exp_id)] = bool(payload["grade_label"])
        state.record_links[str(record.exp_id)] = payload.get("candidate")
    elif etype == "space_added":
        spec = SurrogateSpaceSpec.from_dict(payload["space"])
        state.spaces[spec.label] = spec
    elif etype == "space_activated":
        state.active_space = payload["label"]
    elif etype == "phase_set":
        state.phase = payload["phase"]
    elif etype == "grade_spec_set":
        state.grade_spec = GradeSpec(**payload["grade_spec"])
    elif etype == "iteration_completed":
        state.batches.append(CandidateBatch.from_dict(payload["batch"]))
        key = str(payload["iteration"])
        state.model_snapshots[key] = payload["models"]
        state.reports[key] = payload["report"]
        if payload.get("front") is not None:
            state.last_front = payload["front"]
        state.iteration = payload["iteration"] + 1
    elif etype == "candidate_reviewed":
        batch = state.batch(payload["batch_id"])
        cand = batch.candidate(payload["candidate_id"])
        cand.review_status = payload["decision"]
        if payload.get("edited_point") is not None:
            cand.point = ConditionPoint.from_dict(payload["edited_point"])
    elif etype == "manual_batch_added":
        state.batches.append(CandidateBatch.from_dict(payload["batch"]))
    elif etype == "candidate_abandoned":
        pass  # audit-only: the review status stays as it was
    else:
        raise ValueError(f"unknown event type {etype!r}")
    state.events.append(event)
    return state


def replay_events(events: Sequence[dict]) -> CampaignState:
    state = new_campaign()
    for event in events:
        apply_event(state, event)
    return state


def _record_event(state: CampaignState, event_type: str, payload: dict) -> dict:
    event = _make_event(state, event_type, payload)
    apply_event(state, event)
    return event


# ---------------------------------------------------------------------------
# Campaign operations


def add_space(state: CampaignState, spec: SurrogateSpaceSpec, activate: bool = False) -> None:
    _record_event(state, "space_added", {"space": spec.to_dict()})
    if activate:
        _record_event(state, "space_activated", {"label": spec.label})


def set_active_space(state: CampaignState, label: str) -> None:
    if label not in state.spaces:
        raise KeyError(f"unknown surrogate space {label!r}")
    _record_event(state, "space_activated", {"label": label})


def set_grade_spec(state: CampaignState, spec: GradeSpec) -> None:
    _record_event(
        state,
        "grade_spec_set",
        {
            "grade_spec": {
                "max_na": spec.max_na,
                "max_mg": spec.max_mg,
                "max_ca": spec.max_ca,
                "max_k": spec.max_k,
                "min_purity_pct": spec.min_purity_pct,
                "k_enforced": spec.k_enforced,
            }
        },
    )


def set_phase(state: CampaignState, phase: str) -> None:
    if phase not in PHASES:
        raise ValueError(f"phase must be one of {PHASES}")
    if phase == "exploitation":
        recs = training_records(state.records)
        labels = grade_labels(recs, state.grade_spec) if recs else np.array([], dtype=bool)
        if labels.size == 0 or labels.all() or not labels.any():
            raise DegenerateLabelsError(
                "cannot enter exploitation: need both battery-grade classes observed"
            )
    _record_event(state, "phase_set", {"phase": phase})


def ingest_result(
    state: CampaignState,
    record: ExperimentRecord,
    candidate: tuple[int, int] | None = None,
) -> None:
    """Append a measured experiment, optionally linked to an approved candidate."""
    if any(r.exp_id == record.exp_id for r in state.records):
        raise ValueError(f"exp_id {record.exp_id} already ingested")
    if candidate is not None:
        batch = state.batch(candidate[0])
        batch.candidate(candidate[1])  # raises KeyError if missing
    label = label_grade(record.final, state.grade_spec)
    _record_event(
        state,
        "record_added",
        {
            "record": record_to_dict(record),
            "grade_label": bool(label),
            "candidate": list(candidate) if candidate else None,
        },
    )


def review_candidate(
    state: CampaignState,
    batch_id: int,
    candidate_id: int,
    decision: str,
    edited_point: ConditionPoint | None = None,
) -> None:
    if decision not in ("Approved", "Rejected", "Edited"):
        raise ValueError("decision must be Approved, Rejected or Edited")
    batch = state.batch(batch_id)
    cand = batch.candidate(candidate_id)
    if cand.review_status != "Proposed":
        raise ValueError(
            f"candidate {candidate_id} in batch {batch_id} is {cand.review_status}, not Proposed"
        )
    edited_payload = None
    if decision == "Edited":
        if edited_point is None:
            raise ValueError("an edited decision requires a replacement point")
        space = state.space()
        vec = edited_point.features()[None, :]
        if not bool(space.in_bounds(vec)[0]) or not bool(space.satisfies(vec)[0]):
            raise ValueError(
                "edited point violates the active surrogate space bounds or constraints"
            )
        edited_payload = edited_point.to_dict()
    elif edited_point is not None:
        raise ValueError("edited_point is only allowed with decision='Edited'")
    _record_event(
        state,
        "candidate_reviewed",
        {
            "batch_id": batch_id,
            "candidate_id": candidate_id,
            "decision": decision,
            "edited_point": edited_payload,
        },
    )


def add_manual_batch(
    state: CampaignState, point: ConditionPoint, predictions: dict[str, float] | None = None
) -> CandidateBatch:
    """Queue a human-picked condition as a one-candidate manual batch."""
    vec = point.features()[None, :]
    space = state.space()
    if not bool(space.in_bounds(vec)[0]) or not bool(space.satisfies(vec)[0]):
        raise ValueError("manual point violates the active surrogate space")
    batch = CandidateBatch(
        batch_id=len(state.batches),
        strategy="manual",
        candidates=[
            Candidate(
                candidate_id=0,
                point=point,
                predictions=predictions or {},
                score=0.0,
            )
        ],
        iteration=state.iteration,
    )
    _record_event(state, "manual_batch_added", {"batch": batch.to_dict()})
    return state.batch(batch.batch_id)


def abandon_candidate(state: CampaignState, batch_id: int, candidate_id: int, reason: str) -> None:
    batch = state.batch(batch_id)
    cand = batch.candidate(candidate_id)
    if cand.review_status != "Approved":
        raise ValueError("only approved candidates can be abandoned")
    _record_event(
        state,
        "candidate_abandoned",
        {"batch_id": batch_id, "candidate_id": candidate_id, "reason": reason},
    )


# ---------------------------------------------------------------------------
# Iterations


def _derived_seeds(rng_seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(rng_seed).generate_state(n)]


def _train_models(
    recs: Sequence[ExperimentRecord], config: CampaignConfig, seeds: Sequence[int]
) -> dict[str, GpModel]:
    x = feature_matrix(recs)
    models: dict[str, GpModel] = {}
    for i, target in enumerate(GPR_TARGETS):
        models[target] = gpr_fit(
            x,
            target_vector(recs, target),
            kernel=config.gpr_kernel,
            noise_alpha=config.gpr_alpha,
            alpha_scale=config.gpr_alpha_scale,
            n_restarts=config.gpr_restarts,
            rng_seed=seeds[i],
            feature_names=FEATURE_NAMES,
            target_name=target,
        )
    return models


def _train_classifier(
    recs: Sequence[ExperimentRecord],
    grade_spec: GradeSpec,
    config: CampaignConfig,
    seed: int,
) -> GpClassifier:
    labels = grade_labels(recs, grade_spec)
    return gpc_fit(
        feature_matrix(recs),
        labels,
        kernel=config.gpc_kernel,
        alpha=config.gpc_alpha,
        rng_seed=seed,
        n_restarts=config.gpc_restarts,
        feature_names=FEATURE_NAMES,
    )


@dataclass(eq=False)
class IterationReport:
    iteration: int
    strategy: str
    correlation: analysis.CorrelationMatrix
    importance: analysis.ImportanceReport
    sensitivity: analysis.SensitivityReport
    model_quality: dict[str, dict[str, float]]
    flags: tuple[str, ...]
    surrogate_source: str

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "strategy": self.strategy,
            "correlation": self.correlation.to_dict(),
            "importance": self.importance.to_dict(),
            "sensitivity": self.sensitivity.to_dict(),
            "model_quality": self.model_quality,
            "flags": list(self.flags),
            "surrogate_source": self.surrogate_source,
        }


def _build_report(
    iteration: int,
    strategy: str,
    recs: Sequence[ExperimentRecord],
    models: dict[str, GpModel],
    surrogate_x: np.ndarray,
    surrogate_source: str,
    config: CampaignConfig,
    seeds: Sequence[int],
) -> IterationReport:
    x = feature_matrix(recs)
    columns = list(FEATURE_NAMES) + list(GPR_TARGETS)
    data = np.column_stack([x] + [target_vector(recs, t) for t in GPR_TARGETS])
    corr = analysis.pearson_matrix(data, columns)

    # importance/sensitivity run on the model-predicted surrogate cloud: an
    # interpretable forest is fit to the GPR's final-Mg predictions there,
    # which is where cross-condition trends show up once observations are
    # scarce. A subsample keeps tree growth cheap.
    rng = np.random.default_rng(seeds[2])
    n_fit = min(1500, surrogate_x.shape[0])
    fit_idx = rng.choice(surrogate_x.shape[0], size=n_fit, replace=False)
    cloud_x = surrogate_x[fit_idx]
    cloud_y, _ = gpr_predict(models["final_mg"], cloud_x)
    fmodel = forest_fit(
        cloud_x,
        cloud_y,
        hyperparams=ForestHyperparams(n_trees=60, max_depth=6),
        rng_seed=seeds[0],
    )
    importance = analysis.shapley_importance(
        lambda pts: forest_predict(fmodel, pts),
        background_matrix=cloud_x,
        explain_matrix=cloud_x[: min(24, n_fit)],
        n_permutations=config.report_permutations,
        rng_seed=seeds[1],
        feature_names=FEATURE_NAMES,
    )

    n_probes = min(config.sensitivity_probes, surrogate_x.shape[0])
    probe_idx = rng.choice(surrogate_x.shape[0], size=n_probes, replace=False)
    eval_points = np.vstack([x.mean(axis=0, keepdims=True), surrogate_x[probe_idx]])
    stds = surrogate_x.std(axis=0)
    stds[stds <= 0] = 1e-9
    sens = analysis.sensitivity(
        lambda pts: forest_predict(fmodel, pts),
        eval_points,
        stds,
        feature_names=FEATURE_NAMES,
    )

    quality: dict[str, dict[str, float]] = {}
    flags: list[str] = []
    for target, model in models.items():
        quality[target] = {
            "log_marginal_likelihood": model.log_marginal_likelihood,
            "loo_rmse": gpr_loo_rmse(model),
        }
        mean, _ = gpr_predict(model, surrogate_x)
        negatives = int((mean < 0).sum())
        if negatives:
            flags.append(
                f"non-physical predictions: {negatives}/{surrogate_x.shape[0]} negative "
                f"{target} means over the {surrogate_source} surrogate"
            )
    return IterationReport(
        iteration=iteration,
        strategy=strategy,
        correlation=corr,
        importance=importance,
        sensitivity=sens,
        model_quality=quality,
        flags=tuple(flags),
        surrogate_source=surrogate_source,
    )


def run_iteration(
    state: CampaignState,
    strategy: str,
    params: dict | None = None,
    rng_seed: int = 0,
    config: CampaignConfig = DEFAULT_CONFIG,
) -> tuple[CandidateBatch, IterationReport]:
    """Train per-target surrogates, generate a candidate batch with the given
    strategy, compute the inspection report, and append both to the state."""
    params = dict(params or {})
    strategy = STRATEGY_ALIASES.get(strategy, strategy)
    recs = training_records(state.records)
    if len(recs) < 4:
        raise ValueError(f"need at least 4 non-excluded records, have {len(recs)}")
    space = state.space()
    labels = grade_labels(recs, state.grade_spec)
    needs_classifier = state.phase == "exploitation" or strategy in (
        "boundary_midpoint",
        "ucb",
    )
    if needs_classifier and (labels.all() or not labels.any()):
        raise DegenerateLabelsError(
            "both battery-grade classes are required for this strategy/phase"
        )

    seeds = _derived_seeds(rng_seed, 16)
    models = _train_models(recs, config, seeds[:5])
    clf = (
        _train_classifier(recs, state.grade_spec, config, seeds[5]) if needs_classifier else None
    )

    k = int(params.get("k", config.candidates_per_batch))
    batch_id = len(state.batches)
    front_payload: list[dict] | None = None

    if strategy == "pareto_exploration":
        n_pool = int(params.get("surrogate_points", space.n_points))
        method = params.get("method", config.pareto_method)
        if method == "nsga2":
            def objective(pts: np.ndarray) -> np.ndarray:
                mg, _ = gpr_predict(models["final_mg"], pts)
                ca, _ = gpr_predict(models["final_ca"], pts)
                return np.column_stack([mg, ca])

            front = nsga2_pareto(
                objective,
                space,
                population=int(params.get("population", config.nsga_population)),
                generations=int(params.get("generations", config.nsga_generations)),
                rng_seed=seeds[6],
            )
            surrogate_x = front.x
        else:
            surrogate_x = lhc_sample_matrix(space, seeds[6], n_points=n_pool)
            pts = [
                point_from_features(row, "lhc", seed_origin=i)
                for i, row in enumerate(surrogate_x)
            ]
            mg_mean, mg_std = gpr_predict(models["final_mg"], surrogate_x)
            ca_mean, ca_std = gpr_predict(models["final_ca"], surrogate_x)
            front = front_from_predictions(
                pts,
                surrogate_x,
                np.column_stack([mg_mean, ca_mean]),
                np.column_stack([mg_std, ca_std]),
            )
        batch = pareto_candidates(front, k, batch_id=batch_id)
        front_payload = [p.to_dict() for p in (front.points or [])]
        surrogate_source = "lhc" if method != "nsga2" else "nsga2"
    elif strategy == "random_walk_verification":
        anchors = params.get("anchors")
        if anchors is None:
            if not state.last_front:
                raise ValueError(
                    "random-walk verification needs a previous Pareto front or explicit anchors"
                )
            anchors = [ConditionPoint.from_dict(p) for p in state.last_front]
        walk_cfg = WalkConfig(
            anchor_points=tuple(anchors),
            n_walkers=int(params.get("n_walkers", 100_000)),
            steps_per_walker=int(params.get("steps_per_walker", 1)),
            step_fraction=float(params.get("step_fraction", 0.25)),
            n_output=int(params.get("n_output", 5000)),
        )
        walk_points = random_walk(walk_cfg, space, seeds[6])
        surrogate_x = points_to_matrix(walk_points)
        mg_mean, mg_std = gpr_predict(models["final_mg"], surrogate_x)
        order = np.argsort(mg_mean, kind="stable")[:k]
        candidates = [
            Candidate(
                candidate_id=rank,
                point=walk_points[i],
                predictions={
                    "final_mg": float(mg_mean[i]),
                    "final_mg_std": float(mg_std[i]),
                },
                score=float(mg_mean[i]),
            )
            for rank, i in enumerate(order)
        ]
        batch = CandidateBatch(
            batch_id=batch_id, strategy="random_walk_verification", candidates=candidates
        )
        surrogate_source = "random_walk"
    elif strategy == "boundary_midpoint":
        assert clf is not None
        batch = boundary_midpoints(
            recs, clf, k, grade_spec=state.grade_spec, space=space, batch_id=batch_id
        )
        surrogate_x = lhc_sample_matrix(space, seeds[6], n_points=min(space.n_points, 2000))
        surrogate_source = "lhc"
    elif strategy == "ucb":
        assert clf is not None
        n_pool = int(params.get("surrogate_points", space.n_points))
        surrogate_x = lhc_sample_matrix(space, seeds[6], n_points=n_pool)
        kappa = float(params.get("kappa", config.kappa))
        scores = ucb_scores(clf, surrogate_x, kappa)
        proba = gpc_predict_proba(clf, surrogate_x)
        order = np.argsort(-scores, kind="stable")[:k]
        candidates = [
            Candidate(
                candidate_id=rank,
                point=point_from_features(surrogate_x[i], "lhc", seed_origin=int(i)),
                predictions={
                    "battery_grade_probability": float(proba[i]),
                    "ucb": float(scores[i]),
                },
                score=float(scores[i]),
            )
            for rank, i in enumerate(order)
        ]
        batch = CandidateBatch(batch_id=batch_id, strategy="ucb", candidates=candidates)
        surrogate_source = "lhc"
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    report = _build_report(
        state.iteration, strategy, recs, models, surrogate_x, surrogate_source, config, seeds[8:]
    )
    batch.iteration = state.iteration

    models_payload = {
        "targets": {t: m.to_dict() for t, m in models.items()},
        "classifier": clf.to_dict() if clf is not None else None,
    }
    _record_event(
        state,
        "iteration_completed",
        {
            "iteration": state.iteration,
            "strategy": strategy,
            "params": params,
            "rng_seed": rng_seed,
            "batch": batch.to_dict(),
            "report": report.to_dict(),
            "models": models_payload,
            "front": front_payload,
        },
    )
    return state.batch(batch_id), report


def snapshot_model(state: CampaignState, iteration: int, target: str) -> GpModel | GpClassifier:
    key = str(iteration)
    if key not in state.model_snapshots:
        raise KeyError(f"no model snapshot for iteration {iteration}")
    snap = state.model_snapshots[key]
    if target == "battery_grade":
        if snap.get("classifier") is None:
            raise KeyError(f"iteration {iteration} trained no classifier")
        return GpClassifier.from_dict(snap["classifier"])
    if target not in snap["targets"]:
        raise KeyError(f"iteration {iteration} has no model for target {target!r}")
    return GpModel.from_dict(snap["targets"][target])


# ---------------------------------------------------------------------------
# Persistence


def state_to_dict(state: CampaignState) -> dict:
    return {
        "format": "campaign-state/1",
        "records": [record_to_dict(r) for r in state.records],
        "grade_spec": {
            "max_na": state.grade_spec.max_na,
            "max_mg": state.grade_spec.max_mg,
            "max_ca": state.grade_spec.max_ca,
            "max_k": state.grade_spec.max_k,
            "min_purity_pct": state.grade_spec.min_purity_pct,
            "k_enforced": state.grade_spec.k_enforced,
        },
        "spaces": {label: spec.to_dict() for label, spec in state.spaces.items()},
        "active_space": state.active_space,
        "phase": state.phase,
        "iteration": state.iteration,
        "batches": [b.to_dict() for b in state.batches],
        "model_snapshots": state.model_snapshots,
        "reports": state.reports,
        "record_labels": state.record_labels,
        "record_links": state.record_links,
        "last_front": state.last_front,
        "events": state.events,
    }


def state_from_dict(payload: dict) -> CampaignState:
    if payload.get("format") != "campaign-state/1":
        raise ValueError(f"unsupported state format {payload.get('format')!r}")
    state = CampaignState(
        records=[record_from_dict(r) for r in payload["records"]],
        grade_spec=GradeSpec(**payload["grade_spec"]),
        spaces={
            label: SurrogateSpaceSpec.from_dict(spec)
            for label, spec in payload["spaces"].items()
        },
        active_space=payload["active_space"],
        phase=payload["phase"],
        iteration=int(payload["iteration"]),
        batches=[CandidateBatch.from_dict(b) for b in payload["batches"]],
        model_snapshots=payload["model_snapshots"],
        reports=payload["reports"],
        record_labels={k: bool(v) for k, v in payload["record_labels"].items()},
        record_links=payload["record_links"],
        last_front=payload.get("last_front"),
        events=payload["events"],
    )
    return state


def save_state(state: CampaignState, path: str | Path) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(state_to_dict(state)), encoding="utf-8")
    os.replace(tmp, path)
    events_path = path.with_name(path.stem + ".events.jsonl")
    with open(events_path, "w", encoding="utf-8") as handle:
        for event in state.events:
            handle.write(json.dumps(event) + "\n")


def load_state(path: str | Path) -> CampaignState:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return state_from_dict(payload)


def load_events(path: str | Path) -> list[dict]:
    events_path = Path(path)
    if events_path.suffix != ".jsonl":
        events_path = events_path.with_name(events_path.stem + ".events.jsonl")
    events = []
    with open(events_path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events
