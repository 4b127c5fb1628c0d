// DOM rendering for the four dashboard views. All data comes from the API;
// the client computes nothing scientific beyond display transforms.

import { ApiError, CampaignApi, StaleVersionError } from "./api.js";
import {
  cellToPoint,
  correlationCells,
  correlationColor,
  formatPrediction,
  importanceBars,
  pointWithin,
  probabilityColor,
  recordFormToPayload,
  reviewQueue,
} from "./models.js";
import type {
  BoundaryPlanePayload,
  ReportPayload,
  SpacePayload,
} from "./types.js";
import { FEATURE_NAMES } from "./types.js";

export function el(
  tag: string,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

function banner(kind: "error" | "info" | "warn", text: string): HTMLElement {
  return el("div", { class: `banner ${kind}` }, text);
}

function describeError(err: unknown): string {
  if (err instanceof StaleVersionError) {
    return "Campaign changed on the server; refresh before mutating.";
  }
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return String(err);
}

// ----------------------------------------------------------- candidate queue

export async function renderCandidates(
  api: CampaignApi,
  root: HTMLElement,
  refresh: () => void,
): Promise<void> {
  const { batches } = await api.batches();
  root.replaceChildren();
  const rows = reviewQueue(batches);
  root.append(el("h2", {}, `Review queue (${rows.length} proposed)`));
  if (!rows.length) {
    root.append(banner("info", "No proposed candidates; run an iteration."));
    return;
  }
  const table = el("table", { class: "grid" });
  table.append(
    el(
      "tr",
      {},
      ...["batch", "strategy", "#", "conditions", "predictions", "score", "actions"].map(
        (h) => el("th", {}, h),
      ),
    ),
  );
  for (const row of rows) {
    const point = row.candidate.point.features;
    const conditions = `t_cold=${point.t_cold.toFixed(1)} t_hot=${point.t_hot.toFixed(1)} init_mg=${point.init_mg.toFixed(0)}`;
    const actions = el("td", {});
    const errorSlot = el("span", { class: "inline-error" });
    const act = (decision: "Approved" | "Rejected") => async () => {
      try {
        await api.review(row.batchId, row.candidate.candidate_id, decision);
        refresh();
      } catch (err) {
        errorSlot.textContent = describeError(err);
      }
    };
    const approve = el("button", {}, "approve");
    approve.addEventListener("click", act("Approved"));
    const reject = el("button", {}, "reject");
    reject.addEventListener("click", act("Rejected"));
    const edit = el("button", {}, "edit t_cold…");
    edit.addEventListener("click", async () => {
      const raw = window.prompt("new t_cold value", String(point.t_cold));
      if (raw === null) return;
      const edited = {
        features: { ...point, t_cold: Number(raw) },
        provenance: "manual",
      };
      try {
        await api.review(row.batchId, row.candidate.candidate_id, "Edited", edited);
        refresh();
      } catch (err) {
        errorSlot.textContent = describeError(err);
      }
    });
    actions.append(approve, reject, edit, errorSlot);
    table.append(
      el(
        "tr",
        {},
        el("td", {}, String(row.batchId)),
        el("td", {}, row.strategy),
        el("td", {}, String(row.candidate.candidate_id)),
        el("td", {}, conditions),
        el("td", {}, formatPrediction(row.candidate.predictions)),
        el("td", {}, row.candidate.score.toFixed(4)),
        actions,
      ),
    );
  }
  root.append(table);
}

// ---------------------------------------------------------------- analytics

export async function renderAnalytics(
  api: CampaignApi,
  root: HTMLElement,
  iteration: number,
): Promise<void> {
  root.replaceChildren();
  let report: ReportPayload;
  try {
    report = await api.report(iteration);
  } catch (err) {
    root.append(banner("info", `No report for iteration ${iteration} (${describeError(err)})`));
    return;
  }
  root.append(el("h2", {}, `Iteration ${iteration} — ${report.strategy}`));
  for (const flag of report.flags) {
    root.append(banner("warn", flag));
  }

  if (report.correlation) {
    root.append(el("h3", {}, "Pearson correlations"));
    const names = report.correlation.names;
    const table = el("table", { class: "heatmap" });
    table.append(
      el("tr", {}, el("th", {}), ...names.map((n) => el("th", { class: "rot" }, n))),
    );
    const cells = correlationCells(report.correlation);
    for (const rowName of names) {
      const tr = el("tr", {}, el("th", {}, rowName));
      for (const colName of names) {
        const cell = cells.find((c) => c.row === rowName && c.col === colName)!;
        const td = el("td", { title: `${rowName} ~ ${colName}` }, cell.value.toFixed(2));
        td.style.background = correlationColor(cell.value);
        tr.append(td);
      }
      table.append(tr);
    }
    root.append(table);
  }

  if (report.importance) {
    root.append(el("h3", {}, "Shapley importances (final Mg)"));
    const wrap = el("div", { class: "bars" });
    for (const bar of importanceBars(report.importance)) {
      const row = el("div", { class: "bar-row" });
      row.append(
        el("span", { class: bar.isControl ? "bar-label control" : "bar-label" }, bar.name),
      );
      const fill = el("div", { class: bar.isControl ? "bar control" : "bar" });
      fill.style.width = `${Math.max(1, Math.round(bar.fraction * 100))}%`;
      fill.title = bar.value.toExponential(3);
      row.append(el("div", { class: "bar-track" }, fill));
      wrap.append(row);
    }
    root.append(wrap);
  }

  if (report.sensitivity) {
    root.append(el("h3", {}, "One-sigma sensitivity (final Mg)"));
    const wrap = el("div", { class: "bars" });
    report.sensitivity.names.forEach((name, i) => {
      const row = el("div", { class: "bar-row" });
      row.append(el("span", { class: "bar-label" }, name));
      const fill = el("div", { class: "bar sensitivity" });
      fill.style.width = `${Math.max(1, Math.round(report.sensitivity!.normalized[i] * 100))}%`;
      row.append(el("div", { class: "bar-track" }, fill));
      wrap.append(row);
    });
    root.append(wrap);
  }

  const quality = el("table", { class: "grid" });
  quality.append(
    el("tr", {}, ...["target", "log marginal likelihood", "LOO RMSE"].map((h) => el("th", {}, h))),
  );
  for (const [target, stats] of Object.entries(report.model_quality)) {
    quality.append(
      el(
        "tr",
        {},
        el("td", {}, target),
        el("td", {}, stats.log_marginal_likelihood.toFixed(2)),
        el("td", {}, stats.loo_rmse.toFixed(3)),
      ),
    );
  }
  root.append(el("h3", {}, "Model quality"), quality);
}

// ---------------------------------------------------------- boundary plane

export async function renderBoundary(
  api: CampaignApi,
  root: HTMLElement,
  refresh: () => void,
): Promise<void> {
  root.replaceChildren();
  root.append(el("h2", {}, "Decision boundary: init_mg × t_cold"));
  let plane: BoundaryPlanePayload;
  let space: SpacePayload;
  try {
    const spaces = await api.spaces();
    space = spaces.spaces.find((s) => s.label === spaces.active)!;
    plane = await api.boundaryPlane("init_mg", "t_cold", 64);
  } catch (err) {
    root.append(banner("info", describeError(err)));
    return;
  }

  const grid = plane.probability.length;
  const size = 512;
  const cell = size / grid;
  const canvas = el("canvas", {
    width: String(size),
    height: String(size),
    class: "plane",
  }) as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  for (let yi = 0; yi < grid; yi += 1) {
    for (let xi = 0; xi < grid; xi += 1) {
      ctx.fillStyle = probabilityColor(plane.probability[yi][xi]);
      // canvas y axis points down; plot y ascending upward
      ctx.fillRect(xi * cell, size - (yi + 1) * cell, Math.ceil(cell), Math.ceil(cell));
    }
  }
  const xLo = plane.x_values[0];
  const xHi = plane.x_values[grid - 1];
  const yLo = plane.y_values[0];
  const yHi = plane.y_values[grid - 1];
  for (const record of plane.records) {
    const px = ((record.x - xLo) / (xHi - xLo)) * size;
    const py = size - ((record.y - yLo) / (yHi - yLo)) * size;
    ctx.beginPath();
    ctx.arc(px, py, 4, 0, 2 * Math.PI);
    ctx.fillStyle = record.battery_grade ? "#0a720a" : "#a51212";
    ctx.fill();
    ctx.strokeStyle = "white";
    ctx.stroke();
  }

  const status = el("div", { class: "inline-error" });
  canvas.addEventListener("click", async (event) => {
    const rect = canvas.getBoundingClientRect();
    const xi = Math.min(
      grid - 1,
      Math.max(0, Math.floor(((event.clientX - rect.left) / rect.width) * grid)),
    );
    const yi = Math.min(
      grid - 1,
      Math.max(0, Math.floor(((rect.bottom - event.clientY) / rect.height) * grid)),
    );
    const point = cellToPoint(plane, xi, yi, space);
    if (!pointWithin(point, space)) {
      status.textContent = "cell is outside the active space constraints";
      return;
    }
    try {
      await api.queueManualCandidate(point);
      status.textContent = `queued manual candidate at init_mg=${point.features.init_mg.toFixed(0)}, t_cold=${point.features.t_cold.toFixed(1)}`;
      refresh();
    } catch (err) {
      status.textContent = describeError(err);
    }
  });

  root.append(
    el(
      "p",
      {},
      "Green: predicted battery grade (p ≥ 0.5); red: below. Dots are observed ",
      "records. Click a cell to queue it as a manual candidate at dataset medians.",
    ),
    canvas,
    el(
      "div",
      { class: "axis-note" },
      `init_mg ∈ [${xLo.toFixed(0)}, ${xHi.toFixed(0)}] ppm (x) — t_cold ∈ [${yLo.toFixed(1)}, ${yHi.toFixed(1)}] °C (y)`,
    ),
    status,
  );
}

// -------------------------------------------------------------- data entry

export async function renderEntry(
  api: CampaignApi,
  root: HTMLElement,
  refresh: () => void,
): Promise<void> {
  root.replaceChildren();
  root.append(el("h2", {}, "New experiment result"));
  const fields: Record<string, HTMLInputElement> = {};
  const form = el("div", { class: "entry" });
  const addInput = (label: string, key: string, value = "") => {
    const input = el("input", { value }) as HTMLInputElement;
    fields[key] = input;
    form.append(el("label", {}, label, input));
  };
  addInput("exp id", "exp_id");
  addInput("t_cold (°C)", "t_cold");
  addInput("t_hot (°C)", "t_hot");
  addInput("flow (mL/min)", "flow_rate");
  addInput("slurry (g/100mL)", "slurry_concentration");
  for (const section of ["initial", "final"] as const) {
    for (const key of ["ca", "k", "li", "mg", "na", "purity_pct"]) {
      addInput(`${section} ${key}`, `${section}.${key}`);
    }
  }
  addInput("quality score (1-3)", "quality_score", "1");
  addInput("notes", "notes");

  const status = el("div", { class: "inline-error" });
  const submit = el("button", {}, "ingest record");
  submit.addEventListener("click", async () => {
    const grab = (key: string) => fields[key].value;
    const { payload, errors } = recordFormToPayload({
      exp_id: grab("exp_id"),
      t_cold: grab("t_cold"),
      t_hot: grab("t_hot"),
      flow_rate: grab("flow_rate"),
      slurry_concentration: grab("slurry_concentration"),
      initial: Object.fromEntries(
        ["ca", "k", "li", "mg", "na", "purity_pct"].map((k) => [k, grab(`initial.${k}`)]),
      ),
      final: Object.fromEntries(
        ["ca", "k", "li", "mg", "na", "purity_pct"].map((k) => [k, grab(`final.${k}`)]),
      ),
      quality_score: grab("quality_score"),
      notes: grab("notes"),
    });
    if (errors.length) {
      status.textContent = errors.join("; ");
      return;
    }
    try {
      await api.ingestRecord(payload);
      status.textContent = `ingested exp ${payload!.exp_id}`;
      refresh();
    } catch (err) {
      status.textContent = describeError(err);
    }
  });
  root.append(form, submit, status);

  // surrogate-space boundary editor
  root.append(el("h2", {}, "Surrogate space editor"));
  const spacesBody = el("div", {});
  root.append(spacesBody);
  const { active, spaces } = await api.spaces();
  const table = el("table", { class: "grid" });
  table.append(
    el(
      "tr",
      {},
      ...["space", "ΔT ≥", ...FEATURE_NAMES, ""].map((h) => el("th", {}, h)),
    ),
  );
  for (const space of spaces) {
    const cells = FEATURE_NAMES.map((name) =>
      el("td", {}, `${space.dimensions[name][0]}–${space.dimensions[name][1]}`),
    );
    const action = el("td", {});
    if (space.label === active) {
      action.append(el("span", { class: "active-tag" }, "active"));
    } else {
      const activate = el("button", {}, "activate");
      activate.addEventListener("click", async () => {
        await api.activateSpace(space.label);
        refresh();
      });
      action.append(activate);
    }
    table.append(
      el(
        "tr",
        {},
        el("td", {}, space.label),
        el("td", {}, String(space.min_delta_t)),
        ...cells,
        action,
      ),
    );
  }
  spacesBody.append(table);

  const editor = el("div", { class: "entry" });
  const labelInput = el("input", { value: "custom" }) as HTMLInputElement;
  const dimInput = el("input", { value: "init_mg" }) as HTMLInputElement;
  const loInput = el("input", { value: "100" }) as HTMLInputElement;
  const hiInput = el("input", { value: "4000" }) as HTMLInputElement;
  const baseInput = el("input", { value: active ?? "A" }) as HTMLInputElement;
  editor.append(
    el("label", {}, "base space", baseInput),
    el("label", {}, "new label", labelInput),
    el("label", {}, "dimension", dimInput),
    el("label", {}, "min", loInput),
    el("label", {}, "max", hiInput),
  );
  const spaceStatus = el("div", { class: "inline-error" });
  const save = el("button", {}, "save + activate adjusted space");
  save.addEventListener("click", async () => {
    const base = spaces.find((s) => s.label === baseInput.value);
    if (!base) {
      spaceStatus.textContent = `unknown base space ${baseInput.value}`;
      return;
    }
    const dims = { ...base.dimensions };
    dims[dimInput.value] = [Number(loInput.value), Number(hiInput.value)];
    try {
      await api.addSpace(
        { ...base, label: labelInput.value, dimensions: dims },
        true,
      );
      spaceStatus.textContent = `space ${labelInput.value} active`;
      refresh();
    } catch (err) {
      spaceStatus.textContent = describeError(err);
    }
  });
  root.append(editor, save, spaceStatus);
}
