"""HTTP JSON API over a campaign state file.

All mutations are serialized through one lock and persisted atomically before
the response returns. Errors use a {code, message} body. The optional
`if_version` query parameter lets clients refuse to mutate stale state.
"""

from __future__ import annotations

import io
import threading
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import Body, FastAPI, Query, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import campaign as cp
from .analysis import pearson_matrix
from .config import DEFAULT_CONFIG, CampaignConfig
from .dataset import (
    FEATURE_NAMES,
    feature_matrix,
    load_dataset,
    record_from_dict,
    record_to_dict,
    training_records,
)
from .errors import DegenerateLabelsError, InfeasibleSpaceError
from .gp import GpClassifier, GpModel, gpc_predict_proba, gpr_predict
from .sampling import ConditionPoint, SurrogateSpaceSpec, point_from_features


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(
    state_path: str | Path,
    config: CampaignConfig = DEFAULT_CONFIG,
    static_dir: str | Path | None = None,
) -> FastAPI:
    state_path = Path(state_path)
    if state_path.exists():
        state = cp.load_state(state_path)
    else:
        state = cp.new_campaign(config.grade_spec)
        cp.save_state(state, state_path)

    lock = threading.Lock()
    app = FastAPI(title="hitl-crystal campaign service")

    def persist() -> None:
        cp.save_state(state, state_path)

    def check_version(if_version: int | None) -> None:
        if if_version is not None and if_version != state.version:
            raise ApiError(
                409,
                "stale_version",
                f"client version {if_version} does not match server version {state.version}",
            )

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return _error(exc.status, exc.code, exc.message)

    @app.exception_handler(KeyError)
    async def _key_error(_req: Request, exc: KeyError):
        return _error(404, "not_found", str(exc.args[0]) if exc.args else "not found")

    @app.exception_handler(DegenerateLabelsError)
    async def _labels_error(_req: Request, exc: DegenerateLabelsError):
        return _error(409, "degenerate_labels", str(exc))

    @app.exception_handler(InfeasibleSpaceError)
    async def _infeasible(_req: Request, exc: InfeasibleSpaceError):
        return _error(422, "infeasible_space", str(exc))

    @app.exception_handler(ValueError)
    async def _value_error(_req: Request, exc: ValueError):
        return _error(400, "invalid_request", str(exc))

    # ------------------------------------------------------------- campaign

    @app.get("/campaign")
    def get_campaign() -> dict:
        return {
            "version": state.version,
            "phase": state.phase,
            "iteration": state.iteration,
            "n_records": len(state.records),
            "n_batches": len(state.batches),
            "active_space": state.active_space,
            "spaces": sorted(state.spaces),
            "grade_spec": cp.state_to_dict(state)["grade_spec"],
        }

    # -------------------------------------------------------------- records

    @app.get("/records")
    def get_records() -> dict:
        return {
            "records": [
                {
                    **record_to_dict(r),
                    "battery_grade": state.record_labels.get(str(r.exp_id)),
                    "candidate": state.record_links.get(str(r.exp_id)),
                }
                for r in state.records
            ]
        }

    @app.post("/records")
    def post_record(
        payload: dict = Body(...), if_version: int | None = Query(default=None)
    ) -> dict:
        with lock:
            check_version(if_version)
            record = record_from_dict(payload.get("record", payload))
            candidate = payload.get("candidate")
            cp.ingest_result(
                state, record, candidate=tuple(candidate) if candidate else None
            )
            persist()
            return {"version": state.version, "exp_id": record.exp_id}

    @app.post("/records/import")
    def import_records(
        payload: dict = Body(...), if_version: int | None = Query(default=None)
    ) -> dict:
        with lock:
            check_version(if_version)
            csv_text = payload.get("csv")
            if not isinstance(csv_text, str):
                raise ApiError(400, "invalid_request", "body must carry a 'csv' string")
            records = load_dataset(io.StringIO(csv_text))
            for record in records:
                cp.ingest_result(state, record)
            persist()
            return {"version": state.version, "imported": len(records)}

    # --------------------------------------------------------------- spaces

    @app.get("/spaces")
    def get_spaces() -> dict:
        return {
            "active": state.active_space,
            "spaces": [spec.to_dict() for spec in state.spaces.values()],
        }

    @app.post("/spaces")
    def post_space(
        payload: dict = Body(...), if_version: int | None = Query(default=None)
    ) -> dict:
        with lock:
            check_version(if_version)
            spec = SurrogateSpaceSpec.from_dict(payload)
            cp.add_space(state, spec, activate=bool(payload.get("activate", False)))
            persist()
            return {"version": state.version, "label": spec.label}

    @app.post("/spaces/{label}/activate")
    def activate_space(label: str, if_version: int | None = Query(default=None)) -> dict:
        with lock:
            check_version(if_version)
            cp.set_active_space(state, label)
            persist()
            return {"version": state.version, "active": state.active_space}

    @app.post("/phase")
    def post_phase(
        payload: dict = Body(...), if_version: int | None = Query(default=None)
    ) -> dict:
        with lock:
            check_version(if_version)
            cp.set_phase(state, str(payload.get("phase", "")))
            persist()
            return {"version": state.version, "phase": state.phase}

    # ----------------------------------------------------------- iterations

    @app.post("/iterations")
    def post_iteration(
        strategy: str = Query(...),
        seed: int = Query(default=0),
        params: dict | None = Body(default=None),
        if_version: int | None = Query(default=None),
    ) -> dict:
        with lock:
            check_version(if_version)
            batch, report = cp.run_iteration(
                state, strategy, params or {}, rng_seed=seed, config=config
            )
            persist()
            return {
                "version": state.version,
                "iteration": report.iteration,
                "batch": batch.to_dict(),
                "report": report.to_dict(),
            }

    @app.get("/iterations/{iteration}/report")
    def get_report(iteration: int) -> dict:
        key = str(iteration)
        if key not in state.reports:
            raise ApiError(404, "not_found", f"no report for iteration {iteration}")
        return state.reports[key]

    @app.get("/analysis/{iteration}")
    def get_analysis(iteration: int) -> dict:
        return get_report(iteration)

    # -------------------------------------------------------------- batches

    @app.get("/batches")
    def get_batches() -> dict:
        return {"batches": [b.to_dict() for b in state.batches]}

    @app.post("/batches/{batch_id}/candidates/{candidate_id}/review")
    def review(
        batch_id: int,
        candidate_id: int,
        payload: dict = Body(...),
        if_version: int | None = Query(default=None),
    ) -> dict:
        with lock:
            check_version(if_version)
            decision = str(payload.get("decision", ""))
            edited = payload.get("edited_point")
            edited_point = ConditionPoint.from_dict(edited) if edited else None
            cp.review_candidate(state, batch_id, candidate_id, decision, edited_point)
            persist()
            return {
                "version": state.version,
                "candidate": state.batch(batch_id).candidate(candidate_id).to_dict(),
            }

    @app.post("/batches/manual")
    def manual_candidate(
        payload: dict = Body(...), if_version: int | None = Query(default=None)
    ) -> dict:
        """Queue a human-picked condition as a one-candidate manual batch."""
        with lock:
            check_version(if_version)
            point = ConditionPoint.from_dict(payload["point"])
            batch = cp.add_manual_batch(state, point, _predict_point(point))
            persist()
            return {"version": state.version, "batch": batch.to_dict()}

    def _predict_point(point: ConditionPoint) -> dict[str, float]:
        preds: dict[str, float] = {}
        if state.model_snapshots:
            latest = str(max(int(k) for k in state.model_snapshots))
            snap = state.model_snapshots[latest]
            x = point.features()[None, :]
            for target, model_dict in snap["targets"].items():
                model = GpModel.from_dict(model_dict)
                mean, _ = gpr_predict(model, x)
                preds[target] = float(mean[0])
            if snap.get("classifier"):
                clf = GpClassifier.from_dict(snap["classifier"])
                preds["battery_grade_probability"] = float(gpc_predict_proba(clf, x)[0])
        return preds

    # --------------------------------------------------------------- models

    @app.api_route("/models/{iteration}/{target}/predict", methods=["GET", "POST"])
    def predict(iteration: int, target: str, payload: dict = Body(...)) -> dict:
        model = cp.snapshot_model(state, iteration, target)
        points = payload.get("points")
        if not isinstance(points, list) or not points:
            raise ApiError(400, "invalid_request", "body must carry a non-empty 'points' list")
        matrix = np.array(
            [[float(p[name]) for name in FEATURE_NAMES] for p in points], dtype=float
        )
        if isinstance(model, GpClassifier):
            proba = gpc_predict_proba(model, matrix)
            return {"probabilities": proba.tolist()}
        mean, std = gpr_predict(model, matrix)
        return {"mean": mean.tolist(), "std": std.tolist()}

    @app.get("/boundary-plane")
    def boundary_plane(
        x: str = Query(default="init_mg"),
        y: str = Query(default="t_cold"),
        grid: int = Query(default=64, ge=2, le=256),
        iteration: int | None = Query(default=None),
    ) -> dict:
        """Probability grid over two feature axes, other features at the
        non-excluded record medians; observed records are attached for overlay."""
        if x not in FEATURE_NAMES or y not in FEATURE_NAMES:
            raise ApiError(400, "invalid_request", f"axes must be among {FEATURE_NAMES}")
        if x == y:
            raise ApiError(400, "invalid_request", "x and y must differ")
        clf = _latest_classifier(iteration)
        space = state.space()
        bounds = space.bounds()
        xi, yi = FEATURE_NAMES.index(x), FEATURE_NAMES.index(y)
        recs = training_records(state.records)
        if not recs:
            raise ApiError(409, "no_records", "no records available for the overlay")
        features = feature_matrix(recs)
        medians = np.median(features, axis=0)
        xs = np.linspace(bounds[xi, 0], bounds[xi, 1], grid)
        ys = np.linspace(bounds[yi, 0], bounds[yi, 1], grid)
        pts = np.tile(medians, (grid * grid, 1))
        gx, gy = np.meshgrid(xs, ys)
        pts[:, xi] = gx.ravel()
        pts[:, yi] = gy.ravel()
        proba = gpc_predict_proba(clf, pts).reshape(grid, grid)
        return {
            "x": x,
            "y": y,
            "x_values": xs.tolist(),
            "y_values": ys.tolist(),
            "probability": proba.tolist(),
            "medians": {name: float(m) for name, m in zip(FEATURE_NAMES, medians)},
            "records": [
                {
                    "exp_id": r.exp_id,
                    "x": float(features[i, xi]),
                    "y": float(features[i, yi]),
                    "battery_grade": state.record_labels.get(str(r.exp_id)),
                }
                for i, r in enumerate(recs)
            ],
        }

    def _latest_classifier(iteration: int | None) -> GpClassifier:
        keys = [int(k) for k in state.model_snapshots if state.model_snapshots[k].get("classifier")]
        if iteration is not None:
            if str(iteration) not in state.model_snapshots or not state.model_snapshots[
                str(iteration)
            ].get("classifier"):
                raise ApiError(404, "not_found", f"iteration {iteration} has no classifier")
            chosen = iteration
        elif keys:
            chosen = max(keys)
        else:
            raise ApiError(
                409,
                "no_classifier",
                "no classifier snapshot yet; run an exploitation iteration first",
            )
        return GpClassifier.from_dict(state.model_snapshots[str(chosen)]["classifier"])

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="dashboard")

    return app
