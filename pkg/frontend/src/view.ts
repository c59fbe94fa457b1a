// Pure HTML renderers. Everything user-controlled is escaped; functions
// return strings so they are testable without a DOM.

import type { Card } from "./state.js";
import { CATEGORIES, CATEGORY_LABELS, type CategoryName } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

export function formatScore(score: number): string {
  return score.toFixed(3);
}

/** Category chips in descending score order (the reviewer sees the model's
 * strongest hints first; scores shown to help catch missing labels). */
export function sortedCategoryScores(
  scores: Record<string, number>,
): [CategoryName, number][] {
  return CATEGORIES.map((c) => [c, scores[c] ?? 0] as [CategoryName, number]).sort(
    (a, b) => b[1] - a[1] || a[0].localeCompare(b[0]),
  );
}

export function renderCard(card: Card, focused: boolean): string {
  const { article, prediction } = card.item;
  const chips = sortedCategoryScores(prediction.category_scores)
    .map(([name, score]) => {
      const on = card.selected.has(name);
      return (
        `<button class="chip${on ? " on" : ""}" data-category="${name}" ` +
        `data-article="${escapeHtml(article.id)}">` +
        `${escapeHtml(CATEGORY_LABELS[name])} <span class="chip-score">` +
        `${formatScore(score)}</span></button>`
      );
    })
    .join("");
  const error = card.error
    ? `<p class="card-error" role="alert">${escapeHtml(card.error)}` +
      (card.status === "failed" ? " — will retry, nothing was lost" : "") +
      `</p>`
    : "";
  const published = escapeHtml(article.published_at.slice(0, 10));
  return `
<article class="card${focused ? " focused" : ""}" data-id="${escapeHtml(article.id)}">
  <header>
    <span class="badge source">${escapeHtml(article.source)}</span>
    <span class="badge lang">${escapeHtml(article.language)}</span>
    <span class="badge date">${published}</span>
    <span class="badge score" title="relevance score">${formatScore(
      prediction.relevance_score,
    )}</span>
  </header>
  <h3>${escapeHtml(article.title)}</h3>
  <p class="body-text">${escapeHtml(article.body)}</p>
  <div class="chips">${chips}</div>
  ${error}
  <footer>
    <button class="accept" data-article="${escapeHtml(article.id)}">relevant (a)</button>
    <button class="reject" data-article="${escapeHtml(article.id)}">not relevant (x)</button>
  </footer>
</article>`;
}

export function renderQueue(cards: Card[], cursor: number): string {
  if (!cards.length) {
    return `<p class="empty">Queue is empty — nothing awaiting review.</p>`;
  }
  return cards.map((card, i) => renderCard(card, i === cursor)).join("\n");
}

export function renderQueueStatus(count: number, loading: boolean, error?: string): string {
  if (error) {
    return `<p class="load-error" role="alert">${escapeHtml(error)} ` +
      `<button class="retry">retry</button></p>`;
  }
  if (loading) return `<p class="loading">loading queue…</p>`;
  return `<p class="status">${count} article${count === 1 ? "" : "s"} awaiting review</p>`;
}
