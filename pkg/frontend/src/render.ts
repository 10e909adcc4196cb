/** Pure HTML builders: every displayed value comes straight from a service
 * response field; nothing is synthesized client-side. */

import type {
  AskResponse,
  Citation,
  ClaimEvidenceRow,
  MissingEntry,
  SessionSummary,
  TraceStep,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

/** Published score->label mapping: >=0.75 High, 0.5 Medium, below Low. */
export function confidenceLabel(score: number): "High" | "Medium" | "Low" {
  if (score >= 0.75) return "High";
  if (score === 0.5) return "Medium";
  return "Low";
}

export function confidenceBadge(score: number): string {
  const label = confidenceLabel(score);
  const tone = { High: "green", Medium: "amber", Low: "red" }[label];
  return `<span class="badge badge-${tone}" title="final confidence">${label} (${score.toFixed(2)})</span>`;
}

export function disclaimerBanner(disclaimer: string | null): string {
  if (!disclaimer) return "";
  return `<div class="banner banner-disclaimer" role="alert">${escapeHtml(disclaimer)}</div>`;
}

export function citationChips(citations: Citation[]): string {
  if (citations.length === 0) return "";
  const chips = citations
    .map(
      (c, i) =>
        `<button class="chip" data-doc="${escapeHtml(c.doc_id)}" data-span="${c.span_id}">` +
        `[${i + 1}] ${escapeHtml(c.title)} <small>sim ${c.similarity.toFixed(2)}</small></button>`,
    )
    .join("");
  return `<div class="chips">${chips}</div>`;
}

export function claimEvidenceDrilldown(rows: ClaimEvidenceRow[]): string {
  if (rows.length === 0) return `<div class="drilldown drilldown-empty">No claim table.</div>`;
  const items = rows
    .map((row) => {
      const supports =
        row.supports.length === 0
          ? `<li class="support support-none">unsupported</li>`
          : row.supports
              .map(
                (s) =>
                  `<li class="support">${escapeHtml(s.doc_id)} #${s.span_id} ` +
                  `<small>offsets ${s.offsets[0]}-${s.offsets[1]}</small></li>`,
              )
              .join("");
      return `<li class="claim"><p>${escapeHtml(row.claim_text)}</p><ul>${supports}</ul></li>`;
    })
    .join("");
  return `<ol class="drilldown">${items}</ol>`;
}

export function progressIndicator(trace: TraceStep[], iteration: number, budget = 5): string {
  const last = trace[trace.length - 1];
  const state = last ? last.to : "idle";
  return (
    `<div class="progress"><span class="state">state: ${escapeHtml(state)}</span>` +
    `<span class="iteration">iteration ${iteration} of ${budget}</span></div>`
  );
}

export function answerView(response: AskResponse): string {
  const pieces = [
    `<article class="answer answer-${response.outcome}">`,
    progressIndicator(response.trace, response.iteration_i),
    confidenceBadge(response.confidence),
    disclaimerBanner(response.disclaimer),
    `<div class="answer-text">${escapeHtml(response.answer)}</div>`,
  ];
  if (!response.abstained) {
    pieces.push(citationChips(response.citations));
    pieces.push(claimEvidenceDrilldown(response.claim_evidence));
  }
  pieces.push(`</article>`);
  return pieces.join("\n");
}

export function retryAffordance(message: string): string {
  return (
    `<div class="banner banner-error" role="alert">${escapeHtml(message)} ` +
    `<button class="retry" data-action="retry">Retry</button></div>`
  );
}

export function missingListTable(entries: MissingEntry[]): string {
  if (entries.length === 0) {
    return `<p class="missing-empty">Missing-List is empty.</p>`;
  }
  const rows = entries
    .map(
      (e) =>
        `<tr data-canonical="${escapeHtml(e.canonical)}">` +
        `<td>${escapeHtml(e.canonical)}</td><td>${escapeHtml(e.title)}</td>` +
        `<td>${e.tier}</td><td>${escapeHtml(e.first_seen)}</td>` +
        `<td><label class="upload">Upload` +
        `<input type="file" data-action="upload" data-canonical="${escapeHtml(e.canonical)}"></label></td></tr>`,
    )
    .join("");
  return (
    `<table class="missing-list"><thead><tr>` +
    `<th>canonical</th><th>title</th><th>tier</th><th>first seen</th><th></th>` +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function sessionList(sessions: SessionSummary[]): string {
  const items = sessions
    .map(
      (s) =>
        `<li class="session" data-session="${escapeHtml(s.session_id)}">` +
        `${escapeHtml(s.title)} <small>${s.message_count} messages</small></li>`,
    )
    .join("");
  return `<ul class="sessions">${items}</ul>`;
}

export function uploadNotice(status: string, canonical: string): string {
  const tone = status === "requeued" ? "ok" : "warn";
  return `<div class="banner banner-${tone}">${escapeHtml(canonical)}: ${escapeHtml(status)}</div>`;
}
