// Payload shapes mirrored from the campaign HTTP API.

export interface CampaignSummary {
  version: number;
  phase: string;
  iteration: number;
  n_records: number;
  n_batches: number;
  active_space: string | null;
  spaces: string[];
  grade_spec: Record<string, number | boolean>;
}

export interface ConditionPointPayload {
  features: Record<string, number>;
  provenance?: string;
  seed_origin?: number | null;
}

export interface CandidatePayload {
  candidate_id: number;
  point: ConditionPointPayload;
  predictions: Record<string, number>;
  score: number;
  review_status: "Proposed" | "Approved" | "Rejected" | "Edited";
}

export interface BatchPayload {
  batch_id: number;
  strategy: string;
  candidates: CandidatePayload[];
  iteration: number | null;
  notes: string[];
}

export interface RecordPayload {
  exp_id: number;
  controls: Record<string, number>;
  initial: Record<string, number | null>;
  final: Record<string, number | null>;
  quality_score: number;
  excluded: boolean;
  notes: string;
  battery_grade?: boolean | null;
}

export interface CorrelationPayload {
  names: string[];
  matrix: number[][];
  n_samples: number;
  dropped: string[];
}

export interface ImportancePayload {
  names: string[];
  importance: number[];
  half_widths: number[];
  ranks: number[];
  n_permutations: number;
}

export interface SensitivityPayload {
  names: string[];
  responses: number[];
  normalized: number[];
}

export interface ReportPayload {
  iteration: number;
  strategy: string;
  correlation: CorrelationPayload | null;
  importance: ImportancePayload | null;
  sensitivity: SensitivityPayload | null;
  model_quality: Record<string, Record<string, number>>;
  flags: string[];
  surrogate_source: string;
}

export interface BoundaryPlanePayload {
  x: string;
  y: string;
  x_values: number[];
  y_values: number[];
  probability: number[][];
  medians: Record<string, number>;
  records: { exp_id: number; x: number; y: number; battery_grade: boolean | null }[];
}

export interface SpacePayload {
  label: string;
  n_points: number;
  min_delta_t: number;
  max_element_sum: number;
  dimensions: Record<string, [number, number]>;
}

export const FEATURE_NAMES = [
  "t_cold",
  "t_hot",
  "flow_rate",
  "slurry_concentration",
  "init_ca",
  "init_k",
  "init_li",
  "init_mg",
  "init_na",
] as const;
