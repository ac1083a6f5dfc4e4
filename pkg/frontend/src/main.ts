// Bootstrap: hash routing, auto-refresh, and event wiring. All state lives
// on the gateway; this file only refetches and re-renders.

import { GatewayClient } from "./api.js";
import {
  nextOffset, parseRoute, prevOffset, routeAfterUpload, routeHash,
  whatIfAccepted, type PageState, type Route,
} from "./logic.js";
import { renderDetail, renderQueue, renderUpload } from "./render.js";
import type { Status, StowOutcome } from "./types.js";

const PAGE_LIMIT = 25;
const REFRESH_MS = 5000;

function gatewayBase(): string {
  const fromQuery = new URLSearchParams(location.search).get("gateway");
  if (fromQuery) {
    localStorage.setItem("gateway", fromQuery);
  }
  return fromQuery ?? localStorage.getItem("gateway") ?? "http://127.0.0.1:8008";
}

const api = new GatewayClient(gatewayBase());
const app = document.getElementById("app") as HTMLElement;

let offset = 0;
let refreshTimer: number | undefined;
let uploadOutcome: StowOutcome | null = null;
let uploadBusy = false;

function setError(error: unknown): void {
  app.innerHTML = `<div class="banner banner-error">gateway error:
    ${String(error)} <span class="meta">(${api.baseUrl})</span></div>`;
}

async function showQueue(status?: Status): Promise<void> {
  const [page, totals] = await Promise.all([
    api.listPredictions(status, PAGE_LIMIT, offset),
    api.tabTotals(),
  ]);
  const pageState: PageState = { offset, limit: PAGE_LIMIT, total: page.total };
  app.innerHTML = renderQueue(page, pageState, status, totals);
  app.querySelectorAll<HTMLElement>("tr.row").forEach((row) => {
    row.addEventListener("click", () => {
      location.hash = routeHash({ view: "detail", sop: row.dataset.sop as string });
    });
  });
  app.querySelector<HTMLButtonElement>('[data-page="next"]')?.addEventListener(
    "click", () => { offset = nextOffset(pageState); void render(); });
  app.querySelector<HTMLButtonElement>('[data-page="prev"]')?.addEventListener(
    "click", () => { offset = prevOffset(pageState); void render(); });
}

async function showDetail(sop: string): Promise<void> {
  const [record, health] = await Promise.all([api.getRecord(sop), api.healthz()]);
  app.innerHTML = renderDetail(record, health, (study, instance) =>
    api.wadoUrl(study, instance));

  const slider = app.querySelector<HTMLInputElement>("#whatif");
  slider?.addEventListener("input", () => {
    const t = Number(slider.value);
    const value = app.querySelector("#whatif-value") as HTMLElement;
    const outcome = app.querySelector("#whatif-outcome") as HTMLElement;
    const accepted = record.gate !== null &&
      whatIfAccepted(record.gate.in_dist_prob, t);
    value.textContent = t.toFixed(3);
    outcome.textContent = accepted ? "would accept" : "would reject";
    outcome.className = `badge badge-${accepted ? "accepted" : "rejected_ood"}`;
  });

  app.querySelectorAll<HTMLButtonElement>("[data-review]").forEach((button) => {
    button.addEventListener("click", async () => {
      const note = (app.querySelector("#review-note") as HTMLInputElement).value;
      await api.review(sop, button.dataset.review as "confirmed" | "overridden", note);
      await render();  // reload so the screen shows the stored state
    });
  });
}

async function uploadFiles(files: FileList | File[]): Promise<void> {
  uploadBusy = true;
  await render();
  try {
    const parts: Uint8Array[] = [];
    for (const file of Array.from(files)) {
      parts.push(new Uint8Array(await file.arrayBuffer()));
    }
    uploadOutcome = await api.stow(parts);
    const next = routeAfterUpload(uploadOutcome);
    if (next.view !== "upload") {
      location.hash = routeHash(next);
      return;
    }
  } finally {
    uploadBusy = false;
  }
  await render();
}

function showUpload(): void {
  app.innerHTML = renderUpload(uploadOutcome, uploadBusy);
  const zone = app.querySelector("#dropzone") as HTMLElement;
  const input = app.querySelector("#file-input") as HTMLInputElement;
  zone.addEventListener("click", () => input.click());
  input.addEventListener("change", () => {
    if (input.files?.length) { void uploadFiles(input.files); }
  });
  zone.addEventListener("dragover", (event) => event.preventDefault());
  zone.addEventListener("drop", (event) => {
    event.preventDefault();
    if (event.dataTransfer?.files.length) { void uploadFiles(event.dataTransfer.files); }
  });
}

async function render(): Promise<void> {
  const route: Route = parseRoute(location.hash);
  if (refreshTimer !== undefined) {
    clearInterval(refreshTimer);
    refreshTimer = undefined;
  }
  try {
    if (route.view === "detail") {
      await showDetail(route.sop);
    } else if (route.view === "upload") {
      showUpload();
    } else {
      await showQueue(route.status);
      refreshTimer = window.setInterval(() => { void render(); }, REFRESH_MS);
    }
  } catch (error) {
    setError(error);
  }
}

window.addEventListener("hashchange", () => {
  offset = 0;
  void render();
});
void render();
