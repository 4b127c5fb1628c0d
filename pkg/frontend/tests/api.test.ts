import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, CampaignApi, StaleVersionError } from "../src/api.js";

type Call = { url: string; init?: RequestInit };

function stubFetch(
  responses: Record<string, { status?: number; body: unknown }>,
): Call[] {
  const calls: Call[] = [];
  vi.stubGlobal("fetch", async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const path = url.split("?")[0];
    const match = responses[path];
    if (!match) throw new Error(`unexpected fetch ${url}`);
    return new Response(JSON.stringify(match.body), {
      status: match.status ?? 200,
      headers: { "Content-Type": "application/json" },
    });
  });
  return calls;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("CampaignApi", () => {
  it("tracks the server version and guards mutations with it", async () => {
    const calls = stubFetch({
      "/campaign": {
        body: {
          version: 12,
          phase: "exploitation",
          iteration: 3,
          n_records: 40,
          n_batches: 2,
          active_space: "E",
          spaces: ["A", "E"],
          grade_spec: {},
        },
      },
      "/batches/1/candidates/2/review": {
        body: { version: 13, candidate: { review_status: "Approved" } },
      },
    });
    const api = new CampaignApi("");
    await api.campaign();
    expect(api.version).toBe(12);
    await api.review(1, 2, "Approved");
    const reviewCall = calls.find((c) => c.url.includes("/review"))!;
    expect(reviewCall.url).toContain("if_version=12");
    expect(JSON.parse(String(reviewCall.init?.body))).toEqual({
      decision: "Approved",
    });
    expect(api.version).toBe(13);
  });

  it("passes edited points through to the review endpoint", async () => {
    const calls = stubFetch({
      "/batches/0/candidates/0/review": { body: { version: 1, candidate: {} } },
    });
    const api = new CampaignApi("");
    await api.review(0, 0, "Edited", { features: { t_cold: 55 } });
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body.decision).toBe("Edited");
    expect(body.edited_point.features.t_cold).toBe(55);
  });

  it("surfaces {code, message} errors as typed exceptions", async () => {
    stubFetch({
      "/records": {
        status: 400,
        body: { code: "invalid_request", message: "exp_id 1 already ingested" },
      },
    });
    const api = new CampaignApi("");
    await expect(api.ingestRecord({})).rejects.toMatchObject({
      code: "invalid_request",
      status: 400,
    });
    await expect(api.ingestRecord({})).rejects.toBeInstanceOf(ApiError);
  });

  it("maps stale-version conflicts to StaleVersionError", async () => {
    stubFetch({
      "/phase": {
        status: 409,
        body: { code: "stale_version", message: "server is at version 9" },
      },
    });
    const api = new CampaignApi("");
    await expect(api.setPhase("exploitation")).rejects.toBeInstanceOf(
      StaleVersionError,
    );
  });

  it("requests the boundary plane with the documented axes", async () => {
    const calls = stubFetch({
      "/boundary-plane": {
        body: {
          x: "init_mg",
          y: "t_cold",
          x_values: [],
          y_values: [],
          probability: [],
          medians: {},
          records: [],
        },
      },
    });
    const api = new CampaignApi("");
    await api.boundaryPlane("init_mg", "t_cold", 64);
    expect(calls[0].url).toBe("/boundary-plane?x=init_mg&y=t_cold&grid=64");
  });

  it("posts manual candidates from boundary clicks", async () => {
    const calls = stubFetch({
      "/batches/manual": {
        body: { version: 5, batch: { batch_id: 4, strategy: "manual" } },
      },
    });
    const api = new CampaignApi("");
    const result = await api.queueManualCandidate({
      features: { init_mg: 3000, t_cold: 70 },
    });
    expect(result.batch.strategy).toBe("manual");
    expect(JSON.parse(String(calls[0].init?.body)).point.features.init_mg).toBe(3000);
  });
});
