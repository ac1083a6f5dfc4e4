// Pure view-model helpers. No fetch, no DOM: everything here is unit-testable
// against plain data, and the renderers do nothing but lay these values out.

import type { Prediction, Status, StowOutcome } from "./types.js";

export const CLASS_ORDER = ["COVID-19", "Non-COVID-19", "No Finding"] as const;

export const STATUSES: Status[] = ["accepted", "rejected_ood", "failed"];

export const STATUS_LABELS: Record<Status, string> = {
  accepted: "Accepted",
  rejected_ood: "Rejected (OOD)",
  failed: "Failed",
};

export interface BarRow {
  label: string;
  probability: number; // the API value, untouched
  percent: number;     // width only; display text is the 4 d.p. label
  text: string;
}

/** Probability bars in fixed class order with 4-decimal labels. */
export function barRows(prediction: Prediction): BarRow[] {
  return CLASS_ORDER.map((label) => {
    const p = prediction.probabilities[label];
    if (p === undefined) {
      throw new Error(`prediction lacks class ${label}`);
    }
    return {
      label,
      probability: p,
      percent: Math.max(0, Math.min(100, p * 100)),
      text: p.toFixed(4),
    };
  });
}

/** The gate rule, recomputed client-side for the what-if slider. */
export function whatIfAccepted(inDistProb: number, threshold: number): boolean {
  return inDistProb >= threshold;
}

export interface PageState {
  offset: number;
  limit: number;
  total: number;
}

export function nextDisabled(page: PageState): boolean {
  return page.offset + page.limit >= page.total;
}

export function prevDisabled(page: PageState): boolean {
  return page.offset === 0;
}

export function nextOffset(page: PageState): number {
  return nextDisabled(page) ? page.offset : page.offset + page.limit;
}

export function prevOffset(page: PageState): number {
  return Math.max(0, page.offset - page.limit);
}

export type Route =
  | { view: "queue"; status?: Status }
  | { view: "detail"; sop: string }
  | { view: "upload" };

/**
 * Where to go after a STOW upload: a single stored record opens its detail
 * view (the rejection banner lives there); several go to the queue; if
 * nothing was stored the upload screen stays up with the failures inline.
 */
export function routeAfterUpload(outcome: StowOutcome): Route {
  const stored = [
    ...outcome.accepted.map((e) => e.sop),
    ...outcome.rejected.map((e) => e.sop),
  ];
  if (stored.length === 1) {
    return { view: "detail", sop: stored[0] };
  }
  if (stored.length > 1) {
    return { view: "queue" };
  }
  return { view: "upload" };
}

export function parseRoute(hash: string): Route {
  const parts = hash.replace(/^#\/?/, "").split("/").filter(Boolean);
  if (parts[0] === "detail" && parts[1]) {
    return { view: "detail", sop: decodeURIComponent(parts[1]) };
  }
  if (parts[0] === "upload") {
    return { view: "upload" };
  }
  const status = (parts[0] === "queue" && parts[1]) ? (parts[1] as Status) : undefined;
  return { view: "queue", status: STATUSES.includes(status as Status) ? status : undefined };
}

export function routeHash(route: Route): string {
  switch (route.view) {
    case "detail":
      return `#/detail/${encodeURIComponent(route.sop)}`;
    case "upload":
      return "#/upload";
    default:
      return route.status ? `#/queue/${route.status}` : "#/queue";
  }
}

// ---------------------------------------------------------------------------
// multipart/related composition for STOW-RS uploads
// ---------------------------------------------------------------------------

const encoder = new TextEncoder();

export interface RelatedBody {
  contentType: string;
  body: Uint8Array;
}

/** Compose the multipart/related body the gateway's /studies endpoint expects. */
export function composeRelated(
  parts: Uint8Array[],
  boundary = "cxrtriage-console-" + Math.random().toString(36).slice(2, 10),
): RelatedBody {
  const chunks: Uint8Array[] = [];
  const delim = encoder.encode(`--${boundary}\r\n`);
  const partHead = encoder.encode("Content-Type: application/dicom\r\n\r\n");
  const crlf = encoder.encode("\r\n");
  for (const part of parts) {
    chunks.push(delim, partHead, part, crlf);
  }
  chunks.push(encoder.encode(`--${boundary}--\r\n`));
  const size = chunks.reduce((n, c) => n + c.length, 0);
  const body = new Uint8Array(size);
  let at = 0;
  for (const chunk of chunks) {
    body.set(chunk, at);
    at += chunk.length;
  }
  return {
    contentType: `multipart/related; type="application/dicom"; boundary=${boundary}`,
    body,
  };
}
