// Pure view-model builders: everything here is DOM-free and unit-tested.

import type {
  BatchPayload,
  BoundaryPlanePayload,
  CandidatePayload,
  CorrelationPayload,
  ImportancePayload,
  ConditionPointPayload,
  SpacePayload,
} from "./types.js";
import { FEATURE_NAMES } from "./types.js";

export interface ReviewRow {
  batchId: number;
  strategy: string;
  candidate: CandidatePayload;
}

/** Proposed candidates across batches; boundary batches sort by |p-0.5|. */
export function reviewQueue(batches: BatchPayload[]): ReviewRow[] {
  const rows: ReviewRow[] = [];
  for (const batch of batches) {
    const proposed = batch.candidates.filter(
      (c) => c.review_status === "Proposed",
    );
    const sorted =
      batch.strategy === "boundary_midpoint"
        ? [...proposed].sort((a, b) => a.score - b.score)
        : proposed;
    for (const candidate of sorted) {
      rows.push({ batchId: batch.batch_id, strategy: batch.strategy, candidate });
    }
  }
  return rows;
}

export interface HeatmapCell {
  row: string;
  col: string;
  value: number;
}

export function correlationCells(payload: CorrelationPayload): HeatmapCell[] {
  const cells: HeatmapCell[] = [];
  payload.names.forEach((row, i) => {
    payload.names.forEach((col, j) => {
      cells.push({ row, col, value: payload.matrix[i][j] });
    });
  });
  return cells;
}

/** Blue (-1) .. white (0) .. red (+1). */
export function correlationColor(value: number): string {
  const v = Math.max(-1, Math.min(1, value));
  const other = Math.round(255 * (1 - Math.abs(v)));
  return v >= 0
    ? `rgb(255, ${other}, ${other})`
    : `rgb(${other}, ${other}, 255)`;
}

export interface ImportanceBar {
  name: string;
  fraction: number; // of the largest importance
  value: number;
  isControl: boolean;
  belowControl: boolean;
}

export function importanceBars(payload: ImportancePayload): ImportanceBar[] {
  const peak = Math.max(...payload.importance, 1e-12);
  const control = payload.names.indexOf("random_control");
  const controlValue = control >= 0 ? payload.importance[control] : -Infinity;
  const order = payload.names
    .map((_, i) => i)
    .sort((a, b) => payload.importance[b] - payload.importance[a]);
  return order.map((i) => ({
    name: payload.names[i],
    fraction: payload.importance[i] / peak,
    value: payload.importance[i],
    isControl: i === control,
    belowControl: payload.importance[i] <= controlValue && i !== control,
  }));
}

/** Map a probability in [0,1] to a diverging color around the 0.5 boundary. */
export function probabilityColor(p: number): string {
  const v = Math.max(0, Math.min(1, p));
  const toward = Math.round(255 * Math.abs(v - 0.5) * 2);
  const rest = 255 - toward;
  return v >= 0.5
    ? `rgb(${rest}, ${Math.round(155 + 0.39 * toward)}, ${rest})`
    : `rgb(${Math.round(180 + 0.29 * toward)}, ${rest}, ${rest})`;
}

/**
 * Feature vector for a clicked boundary cell: plane axes from the cell,
 * every other dimension at the dataset medians, with the temperature
 * differential repaired against the active space when needed.
 */
export function cellToPoint(
  plane: BoundaryPlanePayload,
  xIndex: number,
  yIndex: number,
  space: SpacePayload,
): ConditionPointPayload {
  const features: Record<string, number> = {};
  for (const name of FEATURE_NAMES) {
    features[name] = plane.medians[name];
  }
  features[plane.x] = plane.x_values[xIndex];
  features[plane.y] = plane.y_values[yIndex];

  const minDelta = Math.max(space.min_delta_t, 1e-6);
  if (features.t_hot - features.t_cold < minDelta) {
    const ceiling = space.dimensions.t_hot[1];
    features.t_hot = Math.min(features.t_cold + minDelta + 0.5, ceiling);
    if (features.t_hot - features.t_cold < minDelta) {
      features.t_cold = features.t_hot - minDelta - 0.5;
    }
  }
  return { features, provenance: "manual" };
}

export function pointWithin(point: ConditionPointPayload, space: SpacePayload): boolean {
  for (const name of FEATURE_NAMES) {
    const value = point.features[name];
    const [lo, hi] = space.dimensions[name];
    if (!(value >= lo && value <= hi)) return false;
  }
  const total =
    point.features.init_ca +
    point.features.init_k +
    point.features.init_li +
    point.features.init_mg +
    point.features.init_na;
  if (total > space.max_element_sum) return false;
  return point.features.t_hot - point.features.t_cold >= space.min_delta_t;
}

export interface RecordFormInput {
  exp_id: string;
  t_cold: string;
  t_hot: string;
  flow_rate: string;
  slurry_concentration: string;
  initial: Record<string, string>;
  final: Record<string, string>;
  quality_score: string;
  notes: string;
}

/** Validate the entry form; returns the API payload or field errors. */
export function recordFormToPayload(
  input: RecordFormInput,
): { payload?: Record<string, unknown>; errors: string[] } {
  const errors: string[] = [];
  const num = (label: string, raw: string): number => {
    const value = Number(raw.trim().replace(/%$/, ""));
    if (raw.trim() === "" || Number.isNaN(value)) {
      errors.push(`${label} must be a number`);
      return NaN;
    }
    return value;
  };
  const expId = num("exp_id", input.exp_id);
  const tCold = num("t_cold", input.t_cold);
  const tHot = num("t_hot", input.t_hot);
  if (!Number.isNaN(tCold) && !Number.isNaN(tHot) && tHot <= tCold) {
    errors.push("t_hot must exceed t_cold");
  }
  const quality = num("quality_score", input.quality_score);
  if (![1, 2, 3].includes(quality)) errors.push("quality_score must be 1, 2 or 3");

  const composition = (
    section: "initial" | "final",
    fields: Record<string, string>,
  ) => {
    const out: Record<string, number> = {};
    for (const key of ["ca", "k", "li", "mg", "na", "purity_pct"]) {
      out[key] = num(`${section}.${key}`, fields[key] ?? "");
    }
    return out;
  };
  const initial = composition("initial", input.initial);
  const final = composition("final", input.final);
  if (errors.length) return { errors };
  return {
    errors,
    payload: {
      exp_id: expId,
      controls: {
        t_cold: tCold,
        t_hot: tHot,
        flow_rate: num("flow_rate", input.flow_rate),
        slurry_concentration: num(
          "slurry_concentration",
          input.slurry_concentration,
        ),
      },
      initial,
      final,
      quality_score: quality,
      excluded: false,
      notes: input.notes,
    },
  };
}

export function formatPrediction(predictions: Record<string, number>): string {
  const parts: string[] = [];
  for (const [key, value] of Object.entries(predictions)) {
    if (key.endsWith("_std")) continue;
    const shown =
      Math.abs(value) >= 100 ? value.toFixed(0) : value.toFixed(3);
    parts.push(`${key}=${shown}`);
  }
  return parts.join("  ");
}
