/** Rating-study flow: fetch one outfit at a time in the server's per-user
 * order, collect a binary judgment, and show the significance readout when
 * the session completes.
 *
 * Blinding: rating cards never reveal the outfit's group, its score, or
 * which tile is the hero item.
 */

import { Api, ApiError, AbTestResult, NextEvaluation, UiItem } from "./api.js";
import { swatchColor } from "./swatch.js";

function escapeHtml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderItemTile(item: UiItem, opts: { heroBadge?: boolean } = {}): string {
  const badge = opts.heroBadge && item.hero ? '<span class="hero-badge">hero</span>' : "";
  return [
    `<div class="item-tile" data-item-id="${escapeHtml(item.id)}">`,
    `<div class="swatch" style="background:${swatchColor(item)}"></div>`,
    badge,
    `<div class="item-title">${escapeHtml(item.title ?? item.id)}</div>`,
    `<div class="item-type">${escapeHtml(item.product_type)}</div>`,
    `</div>`,
  ].join("");
}

export function renderRatingCard(next: NextEvaluation): string {
  if (next.done || !next.outfit) {
    return `<div class="rating-done">All outfits rated. Thank you!</div>`;
  }
  const tiles = next.outfit.items.map((item) => renderItemTile(item)).join("");
  return [
    `<div class="outfit-card" data-outfit-id="${escapeHtml(next.outfit.outfit_id)}">`,
    `<div class="outfit-items">${tiles}</div>`,
    `<p class="prompt">Do these items work together stylistically?</p>`,
    `<div class="judgment">`,
    `<button class="rate-no" data-rating="0">No</button>`,
    `<button class="rate-yes" data-rating="1">Yes</button>`,
    `</div>`,
    `</div>`,
  ].join("");
}

export function renderProgress(progress: { rated: number; total: number }): string {
  return `<div class="progress">${progress.rated} / ${progress.total} rated</div>`;
}

export function renderResults(result: AbTestResult): string {
  const pct = result.relative_difference_pct;
  const p = result.p_value === null ? "n/a" : result.p_value.toPrecision(3);
  const rows = Object.entries(result.per_template).map(([name, sub]) => (
    `<tr><td>${escapeHtml(name)}</td><td>${sub.control.mean.toFixed(2)}</td>` +
    `<td>${sub.test.mean.toFixed(2)}</td>` +
    `<td>${sub.relative_difference_pct.toFixed(2)}%</td></tr>`
  )).join("");
  return [
    `<div class="results">`,
    `<h2>Study results</h2>`,
    `<p class="headline">Relative difference: <strong>${pct.toFixed(2)}%</strong>`,
    ` (control ${result.control.mean.toFixed(2)},`,
    ` test ${result.test.mean.toFixed(2)}, p = ${p})</p>`,
    `<table class="per-template">`,
    `<tr><th>template</th><th>control</th><th>test</th><th>rel diff</th></tr>`,
    rows,
    `</table>`,
    `</div>`,
  ].join("");
}

export function renderResultsPending(detail: string): string {
  return `<div class="results-pending">Results are hidden until enough ratings`
    + ` are collected. (${escapeHtml(detail)})</div>`;
}

export type FlowView =
  | { kind: "rating"; html: string; outfitId: string }
  | { kind: "results"; html: string; result: AbTestResult }
  | { kind: "results-pending"; html: string };

export class RatingFlow {
  private current: NextEvaluation | null = null;
  private submitting = false;
  readonly ratedOrder: string[] = [];

  constructor(private api: Api, readonly userId: string) {}

  get progress(): { rated: number; total: number } {
    return this.current?.progress ?? { rated: 0, total: 0 };
  }

  /** Fetch whatever the user should see next: an outfit card or results. */
  async advance(): Promise<FlowView> {
    this.current = await this.api.evaluationNext(this.userId);
    if (!this.current.done && this.current.outfit) {
      return {
        kind: "rating",
        html: renderRatingCard(this.current) + renderProgress(this.current.progress),
        outfitId: this.current.outfit.outfit_id,
      };
    }
    try {
      const result = await this.api.abtestResults();
      return { kind: "results", html: renderResults(result), result };
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        return { kind: "results-pending", html: renderResultsPending(err.detail) };
      }
      throw err;
    }
  }

  /** Submit one judgment for the outfit on screen.
   *
   * Exactly one POST per judgment: re-entrant calls while a submission is in
   * flight are rejected. A network failure retries the identical payload
   * (safe: the server overwrites by (user, outfit)).
   */
  async submit(rating: 0 | 1, retries = 2): Promise<boolean> {
    if (this.submitting || !this.current?.outfit) return false;
    const outfitId = this.current.outfit.outfit_id;
    this.submitting = true;
    try {
      for (let attempt = 0; ; attempt++) {
        try {
          await this.api.postRating(this.userId, outfitId, rating);
          break;
        } catch (err) {
          const retryable = !(err instanceof ApiError) || err.status >= 500;
          if (attempt >= retries || !retryable) throw err;
        }
      }
      this.ratedOrder.push(outfitId);
      return true;
    } finally {
      this.submitting = false;
    }
  }
}
