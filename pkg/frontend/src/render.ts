// Pure HTML-fragment renderers. Render-only contract: sections stay in
// server order, severity strings and grounding flags are printed as
// received, and nothing here re-derives domain values.

import type {
  GroundedAnswerPayload,
  RecommendationReportPayload,
  TranscriptTurnPayload,
} from './api.js';

export const UNGROUNDED_BADGE_TEXT = 'UNGROUNDED — verify with an agronomist';
export const HEALTHY_TEXT = 'No disease detected';

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

function ungroundedBadge(): string {
  return `<span class="badge badge-ungrounded">${escapeHtml(UNGROUNDED_BADGE_TEXT)}</span>`;
}

/** Citations expand to the cited chunk's text when a retrieval trace
 *  supplied it; otherwise the chunk id alone is shown. */
export function renderCitations(
  answer: GroundedAnswerPayload,
  chunkTexts: Map<string, string>,
): string {
  if (answer.citations.length === 0) {
    return '<p class="citations-empty">No citations.</p>';
  }
  const items = answer.citations
    .map((chunkId) => {
      const text = chunkTexts.get(chunkId);
      const body = text
        ? `<blockquote>${escapeHtml(text)}</blockquote>`
        : '<p class="citation-missing">Chunk text not in this payload.</p>';
      return `<details class="citation"><summary>${escapeHtml(chunkId)}</summary>${body}</details>`;
    })
    .join('');
  return `<div class="citations">${items}</div>`;
}

export function renderAnswer(
  answer: GroundedAnswerPayload,
  chunkTexts: Map<string, string>,
): string {
  const badge = answer.grounded ? '' : ungroundedBadge();
  return [
    `<div class="answer" data-grounded="${answer.grounded}">`,
    badge,
    `<p class="answer-text">${escapeHtml(answer.text)}</p>`,
    renderCitations(answer, chunkTexts),
    `<p class="answer-meta">grounding ${escapeHtml(String(answer.grounding_score))}`
      + ` · ${escapeHtml(answer.model_id)}</p>`,
    `</div>`,
  ].join('');
}

export function renderReport(
  report: RecommendationReportPayload,
  chunkTexts: Map<string, string> = new Map(),
): string {
  const header =
    `<div class="report-header">` +
    `<h2>Report: ${escapeHtml(report.image_id)}</h2>` +
    `<p>Status: <span class="status status-${escapeHtml(report.overall_status)}">` +
    `${escapeHtml(report.overall_status)}</span> · generated ` +
    `${escapeHtml(report.generated_at)}</p></div>`;

  if (report.sections.length === 0) {
    return `${header}<p class="healthy">${HEALTHY_TEXT}</p>`;
  }

  // Cards appear exactly in server order; no client-side re-sorting.
  const cards = report.sections
    .map(
      (section) =>
        `<section class="disease-card severity-${escapeHtml(section.severity)}"` +
        ` data-label="${escapeHtml(section.label)}">` +
        `<h3>${escapeHtml(section.label)}</h3>` +
        `<p class="card-stats">severity <strong>${escapeHtml(section.severity)}</strong>` +
        ` · max confidence ${escapeHtml(String(section.max_confidence))}` +
        ` · findings ${escapeHtml(String(section.finding_count))}</p>` +
        renderAnswer(section.answer, chunkTexts) +
        `</section>`,
    )
    .join('');
  return `${header}<div class="report-cards">${cards}</div>`;
}

/** One chat turn; citations expand via the turn's own retrieval trace. */
export function renderTurn(turn: TranscriptTurnPayload): string {
  const chunkTexts = new Map(turn.retrieval.hits.map((hit) => [hit.chunk_id, hit.text]));
  return (
    `<div class="turn">` +
    `<p class="turn-question">${escapeHtml(turn.question)}</p>` +
    renderAnswer(turn.answer, chunkTexts) +
    `</div>`
  );
}

export function renderTranscript(turns: TranscriptTurnPayload[]): string {
  if (turns.length === 0) {
    return '<p class="transcript-empty">No turns yet.</p>';
  }
  return `<div class="transcript">${turns.map(renderTurn).join('')}</div>`;
}

export function renderError(message: string): string {
  return (
    `<div class="error">${escapeHtml(message)} ` +
    `<button type="button" data-action="retry">Retry</button></div>`
  );
}
