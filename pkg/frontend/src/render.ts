// HTML-string renderers. These only lay out values computed in logic.ts or
// taken verbatim from API responses; no numbers originate here.

import {
  barRows, nextDisabled, prevDisabled, routeHash, STATUS_LABELS, STATUSES,
  whatIfAccepted,
  type PageState,
} from "./logic.js";
import type { Healthz, PredictionsPage, Status, StowOutcome, StudyRecord } from "./types.js";

function esc(text: string): string {
  return text.replace(/[&<>"']/g, (c) => ({
    "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&#39;",
  }[c] as string));
}

export function statusBadge(status: Status): string {
  return `<span class="badge badge-${status}">${esc(STATUS_LABELS[status])}</span>`;
}

export function renderTabs(active: Status | undefined,
                           totals: Record<Status, number>): string {
  const tabs = [
    `<a class="tab ${active === undefined ? "active" : ""}" href="${routeHash({ view: "queue" })}">All</a>`,
  ];
  for (const status of STATUSES) {
    tabs.push(
      `<a class="tab ${active === status ? "active" : ""}" ` +
      `href="${routeHash({ view: "queue", status })}" data-tab="${status}">` +
      `${esc(STATUS_LABELS[status])} <span class="count">${totals[status]}</span></a>`,
    );
  }
  return `<nav class="tabs">${tabs.join("")}</nav>`;
}

export function renderQueue(page: PredictionsPage, pageState: PageState,
                            active: Status | undefined,
                            totals: Record<Status, number>): string {
  const tabs = renderTabs(active, totals);
  if (page.total === 0) {
    return `${tabs}<p class="empty-state">No studies in this queue yet.
      Upload one from the <a href="${routeHash({ view: "upload" })}">upload screen</a>.</p>`;
  }
  const rows = page.records.map((record) => {
    const top = record.prediction
      ? `${esc(record.prediction.argmax_label)} ` +
        `(${record.prediction.probabilities[record.prediction.argmax_label].toFixed(4)})`
      : record.status === "failed" ? esc(record.error ?? "error") : "gate rejected";
    return `<tr class="row" data-sop="${esc(record.sop_instance_uid)}">
      <td class="mono">${esc(record.sop_instance_uid)}</td>
      <td>${esc(record.received_at)}</td>
      <td>${statusBadge(record.status)}</td>
      <td>${top}</td>
      <td>${esc(record.review.action)}</td>
    </tr>`;
  }).join("");
  const pager = `<div class="pager">
    <button data-page="prev" ${prevDisabled(pageState) ? "disabled" : ""}>&laquo; newer</button>
    <span>${pageState.offset + 1}&ndash;${Math.min(pageState.offset + pageState.limit, pageState.total)}
      of ${pageState.total}</span>
    <button data-page="next" ${nextDisabled(pageState) ? "disabled" : ""}>older &raquo;</button>
  </div>`;
  return `${tabs}
    <table class="queue">
      <thead><tr><th>SOP instance</th><th>Received</th><th>Status</th>
        <th>Top prediction</th><th>Review</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>${pager}`;
}

export function renderDetail(record: StudyRecord, health: Healthz,
                             wadoUrl: (study: string, sop: string) => string,
                             whatIfThreshold?: number): string {
  const head = `<div class="detail-head">
    <a href="${routeHash({ view: "queue" })}">&larr; queue</a>
    <h2 class="mono">${esc(record.sop_instance_uid)}</h2>
    ${statusBadge(record.status)}
    <div class="meta">study <span class="mono">${esc(record.study_uid)}</span>
      &middot; received ${esc(record.received_at)}</div>
  </div>`;

  let body = "";
  if (record.status === "rejected_ood") {
    body += `<div class="banner banner-review">Human review required:
      the gate flagged this study as out of distribution, so no prediction was made.</div>`;
  } else if (record.status === "failed") {
    body += `<div class="banner banner-error">Processing failed:
      ${esc(record.error ?? "unknown error")}</div>`;
  } else if (record.prediction) {
    const bars = barRows(record.prediction).map((row) => `
      <div class="bar-row">
        <div class="bar-label">${esc(row.label)}</div>
        <div class="bar-track"><div class="bar-fill" style="width:${row.percent}%"></div></div>
        <div class="bar-value mono">${row.text}</div>
      </div>`).join("");
    body += `<section class="bars"><h3>Class probabilities
      <span class="meta">${esc(record.prediction.model_version)}</span></h3>${bars}</section>`;
  }

  if (record.gate) {
    const t = whatIfThreshold ?? record.gate.threshold;
    const accepted = whatIfAccepted(record.gate.in_dist_prob, t);
    body += `<section class="gate">
      <h3>Gate <span class="meta">${esc(record.gate.ood_model_version)}</span></h3>
      <div>in-distribution probability
        <span class="mono">${record.gate.in_dist_prob.toFixed(4)}</span>
        vs stored threshold <span class="mono">${record.gate.threshold.toFixed(4)}</span>
        &rarr; ${record.gate.accepted ? "accepted" : "rejected"}</div>
      <div class="whatif">
        <label>what-if threshold
          <input type="range" id="whatif" min="0" max="1" step="0.001" value="${t}"
                 list="server-threshold">
          <datalist id="server-threshold">
            <option value="${health.ood_threshold}" label="server"></option>
          </datalist>
        </label>
        <span class="mono" id="whatif-value">${t.toFixed(3)}</span>
        <span id="whatif-outcome" class="badge badge-${accepted ? "accepted" : "rejected_ood"}">
          ${accepted ? "would accept" : "would reject"}</span>
        <span class="meta">server threshold marker at
          <span class="mono">${health.ood_threshold.toFixed(3)}</span></span>
      </div>
    </section>`;
  }

  const links = [`<a href="${wadoUrl(record.study_uid, record.sop_instance_uid)}"
      download>source image</a>`];
  if (record.sr_sop_uid) {
    links.push(`<a href="${wadoUrl(record.study_uid, record.sr_sop_uid)}"
      download>structured report</a>`);
  }
  body += `<section class="downloads"><h3>Download</h3>${links.join(" &middot; ")}</section>`;

  body += `<section class="review">
    <h3>Reviewer action</h3>
    <div>current: <strong id="review-state">${esc(record.review.action)}</strong>
      ${record.review.note ? `<span class="meta">note: ${esc(record.review.note)}</span>` : ""}</div>
    <input type="text" id="review-note" placeholder="note"
           value="${esc(record.review.note)}">
    <button data-review="confirmed">Confirm</button>
    <button data-review="overridden">Override</button>
  </section>`;

  return head + body;
}

export function renderUpload(outcome: StowOutcome | null, busy: boolean): string {
  let results = "";
  if (outcome) {
    const lines: string[] = [];
    for (const entry of outcome.accepted) {
      lines.push(`<li class="ok">accepted <a class="mono"
        href="${routeHash({ view: "detail", sop: entry.sop })}">${esc(entry.sop)}</a>
        &rarr; ${esc(entry.prediction.argmax_label)}</li>`);
    }
    for (const entry of outcome.rejected) {
      lines.push(`<li class="warn">rejected <a class="mono"
        href="${routeHash({ view: "detail", sop: entry.sop })}">${esc(entry.sop)}</a>:
        ${esc(entry.reason)}</li>`);
    }
    for (const entry of outcome.failed) {
      lines.push(`<li class="err">part ${entry.index} failed: ${esc(entry.error)}</li>`);
    }
    results = `<ul class="upload-results">${lines.join("")}</ul>`;
  }
  return `<div class="upload">
    <h2>Upload studies</h2>
    <div id="dropzone" class="dropzone ${busy ? "busy" : ""}">
      ${busy ? "uploading&hellip;" : "Drop DICOM files here or click to choose"}
      <input type="file" id="file-input" multiple style="display:none">
    </div>
    ${results}
  </div>`;
}
