import {
  crossCheck,
  evidenceSentence,
  formatProbability,
  sortEvidence,
} from "./evidence.js";
import type { QueueItemView } from "./types.js";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderQueueRows(
  items: QueueItemView[],
  currentId: string | null,
): string {
  if (items.length === 0) {
    return '<li class="empty">Queue is empty — nothing left to review.</li>';
  }
  return items
    .map((item) => {
      const selected = item.item_id === currentId ? " selected" : "";
      return `
        <li class="queue-row${selected}" data-item-id="${escapeHtml(item.item_id)}">
          <span class="entity-name">${escapeHtml(item.entity_name || item.entity_id)}</span>
          <span class="scores">
            s1 ${formatProbability(item.verdict.stage1_prediction)}
            · P(H) ${formatProbability(item.verdict.p_h)}
          </span>
        </li>`;
    })
    .join("\n");
}

export function renderEvidencePanel(
  item: QueueItemView | null,
  template?: string,
): string {
  if (!item) {
    return '<p class="empty">Select a pending item to review its evidence.</p>';
  }
  const check = crossCheck(item);
  const cards = sortEvidence(item.verdict.evidence)
    .map(
      (ev, rank) => `
      <div class="evidence-card" data-rank="${rank + 1}">
        <p class="sentence">${escapeHtml(evidenceSentence(ev.concept, template))}</p>
        <dl>
          <div><dt>P(E)</dt><dd>${formatProbability(ev.p_e)}</dd></div>
          <div><dt>contribution</dt><dd>${formatProbability(ev.contribution)}</dd></div>
          <div><dt>weighted</dt><dd>${formatProbability(ev.weighted)}</dd></div>
        </dl>
      </div>`,
    )
    .join("\n");
  const checkBadge = check.consistent
    ? '<span class="badge ok">evidence mean matches P(H)</span>'
    : '<span class="badge warn">evidence mean disagrees with reported P(H)</span>';
  return `
    <header class="item-header">
      <h2>${escapeHtml(item.entity_name || item.entity_id)}</h2>
      <a class="image-link" href="${escapeHtml(item.image_locator)}" target="_blank" rel="noopener">
        ${escapeHtml(item.image_locator)}
      </a>
      <p class="stage-summary">
        Stage-1 prediction ${formatProbability(item.verdict.stage1_prediction)} (rejected)
        · fused P(H) ${formatProbability(item.verdict.p_h)} ${checkBadge}
      </p>
    </header>
    <section class="evidence-cards">${cards || "<p>No evidence recorded.</p>"}</section>
    <footer class="decision-controls">
      <button id="accept-btn" data-decision="accept">Accept (a)</button>
      <button id="reject-btn" data-decision="reject">Reject (r)</button>
      <button id="next-btn">Next (n)</button>
    </footer>`;
}

export function renderStatusBar(
  decidedCount: number,
  pendingCount: number,
  conflictNotice: string | null,
  lastError: string | null,
): string {
  const pieces = [
    `<span class="progress">${decidedCount} decided · ${pendingCount} pending</span>`,
  ];
  if (conflictNotice) {
    pieces.push(`<span class="notice">${escapeHtml(conflictNotice)}</span>`);
  }
  if (lastError) {
    pieces.push(
      `<span class="error">${escapeHtml(lastError)}</span>` +
        '<button id="retry-btn">Retry</button>',
    );
  }
  return pieces.join(" ");
}
