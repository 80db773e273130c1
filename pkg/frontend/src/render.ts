// Pure HTML-string renderers. Keeping these free of document access makes
// the "rendered verbatim" guarantees directly testable in node.

import type { Attempt, Session } from "./session.js";
import { SETUP_CHECKLIST } from "./session.js";
import type { FeedbackItem, ScreeningResult } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number | null, digits = 3): string {
  return value === null ? "–" : value.toFixed(digits);
}

export function renderFeedbackItem(item: FeedbackItem): string {
  const measured = item.measured === null
    ? ""
    : ` <span class="measured">(measured ${fmt(item.measured, 2)}, threshold ${fmt(item.threshold, 2)})</span>`;
  return `<li class="feedback-item" data-property="${escapeHtml(item.property)}">` +
    `<strong>${escapeHtml(item.property)}</strong>: ${escapeHtml(item.suggestion)}${measured}</li>`;
}

export function renderFeedbackList(items: FeedbackItem[]): string {
  if (!items.length) return `<p class="no-feedback">no capture feedback</p>`;
  return `<ul class="feedback-list">${items.map(renderFeedbackItem).join("")}</ul>`;
}

export function renderConfidenceGauge(confidence: number | null, threshold: number): string {
  const pct = confidence === null ? 0 : Math.round(confidence * 100);
  const state = confidence !== null && confidence >= threshold ? "confident" : "unsure";
  return `<div class="gauge ${state}" role="meter" aria-valuenow="${pct}">` +
    `<div class="gauge-fill" style="width:${pct}%"></div>` +
    `<span class="gauge-label">${confidence === null ? "n/a" : `${pct}%`}</span></div>`;
}

export function renderResultPanel(result: ScreeningResult, threshold: number): string {
  const label = result.label === null
    ? `<span class="label none">no classification</span>`
    : `<span class="label ${escapeHtml(result.label)}">${escapeHtml(result.label)}</span>`;
  return `<section class="result ${result.usable ? "usable" : "unusable"}">` +
    `<h3>verdict: ${escapeHtml(result.verdict)}</h3>` +
    `${label}` +
    renderConfidenceGauge(result.confidence, threshold) +
    renderFeedbackList(result.feedback) +
    `<footer class="meta">model ${escapeHtml(result.model_version)} · ${result.total_ms.toFixed(1)} ms</footer>` +
    `</section>`;
}

export function renderChecklist(): string {
  const items = SETUP_CHECKLIST.map((line) => `<li>${escapeHtml(line)}</li>`).join("");
  return `<aside class="checklist"><h4>capture setup</h4><ul>${items}</ul></aside>`;
}

export function renderRetryBanner(): string {
  return `<div class="retry-banner">service unreachable — check the connection and retry; ` +
    `your session is preserved</div>`;
}

function summaryRow(attempt: Attempt): string {
  const r = attempt.result;
  return `<tr><td>${attempt.seq}</td><td>${escapeHtml(r.verdict)}</td>` +
    `<td>${r.label === null ? "–" : escapeHtml(r.label)}</td>` +
    `<td>${fmt(r.confidence)}</td></tr>`;
}

export function renderSummary(session: Session): string {
  if (!session.history.length) {
    return `<p class="summary-empty">no attempts yet — summary disabled</p>`;
  }
  const rows = session.history.map(summaryRow).join("");
  const last = session.lastAttempt!;
  const final = last.result.label === null
    ? "no classification"
    : `${last.result.label} (confidence ${fmt(last.result.confidence)})`;
  return `<section class="summary"><table>` +
    `<thead><tr><th>#</th><th>verdict</th><th>label</th><th>confidence</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>` +
    `<p class="final">final: ${escapeHtml(final)} · model ${escapeHtml(last.result.model_version)}</p>` +
    `</section>`;
}
