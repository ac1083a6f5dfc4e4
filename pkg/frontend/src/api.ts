// Thin typed client over the gateway JSON API. The fetch function is
// injectable so contract tests can run against a mocked gateway.

import { composeRelated, STATUSES } from "./logic.js";
import type {
  Healthz, PredictionsPage, Review, Status, StowOutcome, StudyRecord,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class GatewayError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class GatewayClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const text = await response.text();
    if (!response.ok) {
      let message = text;
      try {
        message = JSON.parse(text).error ?? text;
      } catch {
        // non-JSON error body; use it verbatim
      }
      throw new GatewayError(response.status, message);
    }
    return JSON.parse(text) as T;
  }

  listPredictions(status?: Status, limit = 50, offset = 0): Promise<PredictionsPage> {
    const query = new URLSearchParams({ limit: String(limit), offset: String(offset) });
    if (status) {
      query.set("status", status);
    }
    return this.request<PredictionsPage>(`/predictions?${query}`);
  }

  /** Per-status totals for the queue tabs (limit=0 returns counts only). */
  async tabTotals(): Promise<Record<Status, number>> {
    const totals = { accepted: 0, rejected_ood: 0, failed: 0 } as Record<Status, number>;
    for (const status of STATUSES) {
      totals[status] = (await this.listPredictions(status, 0, 0)).total;
    }
    return totals;
  }

  getRecord(sop: string): Promise<StudyRecord> {
    return this.request<StudyRecord>(`/predictions/${encodeURIComponent(sop)}`);
  }

  healthz(): Promise<Healthz> {
    return this.request<Healthz>("/healthz");
  }

  review(sop: string, action: Review["action"], note: string): Promise<StudyRecord> {
    return this.request<StudyRecord>(`/predictions/${encodeURIComponent(sop)}/review`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ action, note }),
    });
  }

  stow(parts: Uint8Array[]): Promise<StowOutcome> {
    const { contentType, body } = composeRelated(parts);
    return this.request<StowOutcome>("/studies", {
      method: "POST",
      headers: { "Content-Type": contentType },
      body: body as unknown as BodyInit,
    });
  }

  /** WADO-RS URL for downloading an original image or generated SR. */
  wadoUrl(studyUid: string, sopUid: string): string {
    return `${this.baseUrl}/studies/${encodeURIComponent(studyUid)}` +
      `/instances/${encodeURIComponent(sopUid)}`;
  }
}
