// Thin typed client for the campaign service. The dashboard keeps no state
// of its own: every mutation carries the last seen server version, and a 409
// means someone else moved the campaign first.

import type {
  BatchPayload,
  BoundaryPlanePayload,
  CampaignSummary,
  ConditionPointPayload,
  RecordPayload,
  ReportPayload,
  SpacePayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

export class StaleVersionError extends ApiError {
  constructor(message: string) {
    super("stale_version", message, 409);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = "error";
  let message = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body === "object") {
      code = body.code ?? code;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body: keep the status text
  }
  if (response.status === 409 && code === "stale_version") {
    return new StaleVersionError(message);
  }
  return new ApiError(code, message, response.status);
}

export class CampaignApi {
  version: number | null = null;

  constructor(private base: string = "") {}

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(this.base + path);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  private async mutate<T extends { version?: number }>(
    path: string,
    body: unknown,
  ): Promise<T> {
    const sep = path.includes("?") ? "&" : "?";
    const guarded =
      this.version === null ? path : `${path}${sep}if_version=${this.version}`;
    const response = await fetch(this.base + guarded, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body ?? {}),
    });
    if (!response.ok) throw await parseError(response);
    const payload = (await response.json()) as T;
    if (typeof payload.version === "number") this.version = payload.version;
    return payload;
  }

  async campaign(): Promise<CampaignSummary> {
    const summary = await this.get<CampaignSummary>("/campaign");
    this.version = summary.version;
    return summary;
  }

  records(): Promise<{ records: RecordPayload[] }> {
    return this.get("/records");
  }

  batches(): Promise<{ batches: BatchPayload[] }> {
    return this.get("/batches");
  }

  report(iteration: number): Promise<ReportPayload> {
    return this.get(`/iterations/${iteration}/report`);
  }

  spaces(): Promise<{ active: string | null; spaces: SpacePayload[] }> {
    return this.get("/spaces");
  }

  boundaryPlane(x: string, y: string, grid = 64): Promise<BoundaryPlanePayload> {
    return this.get(`/boundary-plane?x=${x}&y=${y}&grid=${grid}`);
  }

  review(
    batchId: number,
    candidateId: number,
    decision: "Approved" | "Rejected" | "Edited",
    editedPoint?: ConditionPointPayload,
  ) {
    return this.mutate<{ version: number; candidate: unknown }>(
      `/batches/${batchId}/candidates/${candidateId}/review`,
      editedPoint ? { decision, edited_point: editedPoint } : { decision },
    );
  }

  queueManualCandidate(point: ConditionPointPayload) {
    return this.mutate<{ version: number; batch: BatchPayload }>(
      "/batches/manual",
      { point },
    );
  }

  ingestRecord(record: unknown, candidate?: [number, number]) {
    return this.mutate<{ version: number; exp_id: number }>("/records", {
      record,
      candidate: candidate ?? null,
    });
  }

  addSpace(space: SpacePayload, activate: boolean) {
    return this.mutate<{ version: number; label: string }>("/spaces", {
      ...space,
      activate,
    });
  }

  activateSpace(label: string) {
    return this.mutate<{ version: number; active: string }>(
      `/spaces/${label}/activate`,
      {},
    );
  }

  runIteration(strategy: string, seed: number, params: Record<string, unknown>) {
    return this.mutate<{ version: number; iteration: number }>(
      `/iterations?strategy=${strategy}&seed=${seed}`,
      params,
    );
  }

  setPhase(phase: string) {
    return this.mutate<{ version: number; phase: string }>("/phase", { phase });
  }
}
