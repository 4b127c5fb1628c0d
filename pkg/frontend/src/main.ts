// Dashboard shell: tabbed views over the campaign API with version polling.

import { CampaignApi } from "./api.js";
import { el, renderAnalytics, renderBoundary, renderCandidates, renderEntry } from "./views.js";

const api = new CampaignApi("");

const TABS = ["candidates", "analytics", "boundary", "entry"] as const;
type Tab = (typeof TABS)[number];

let currentTab: Tab = "candidates";
let reportIteration = 0;

async function refresh(): Promise<void> {
  const header = document.getElementById("summary")!;
  const body = document.getElementById("view")!;
  try {
    const summary = await api.campaign();
    reportIteration = Math.max(0, summary.iteration - 1);
    header.replaceChildren(
      el(
        "span",
        {},
        `phase ${summary.phase} · iteration ${summary.iteration} · ` +
          `${summary.n_records} records · space ${summary.active_space ?? "—"} · ` +
          `v${summary.version}`,
      ),
    );
  } catch (err) {
    header.replaceChildren(el("span", { class: "inline-error" }, String(err)));
    return;
  }
  if (currentTab === "candidates") await renderCandidates(api, body, refresh);
  else if (currentTab === "analytics") await renderAnalytics(api, body, reportIteration);
  else if (currentTab === "boundary") await renderBoundary(api, body, refresh);
  else await renderEntry(api, body, refresh);
}

function mount(): void {
  const nav = document.getElementById("tabs")!;
  for (const tab of TABS) {
    const button = el("button", { id: `tab-${tab}` }, tab);
    button.addEventListener("click", () => {
      currentTab = tab;
      for (const other of TABS) {
        document.getElementById(`tab-${other}`)!.classList.toggle("on", other === tab);
      }
      void refresh();
    });
    nav.append(button);
  }
  document.getElementById("tab-candidates")!.classList.add("on");
  void refresh();
  // poll the campaign version so concurrent edits show up promptly
  setInterval(() => void refresh(), 15_000);
}

mount();
