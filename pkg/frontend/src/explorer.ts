/** Style-space explorer: a 2-d projection scatter colored by product type,
 * with click-to-inspect nearest compatible items of a chosen type. */

import { Api, Neighbor, ProjectionPoint, UiItem } from "./api.js";
import { renderItemTile } from "./rating.js";
import { swatchColor } from "./swatch.js";

function escapeHtml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const TYPE_PALETTE = [
  "#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2",
  "#b279a2", "#eeca3b", "#9d755d",
];

export function typeColor(productType: string, allTypes: string[]): string {
  const idx = Math.max(0, allTypes.indexOf(productType));
  return TYPE_PALETTE[idx % TYPE_PALETTE.length];
}

export function renderScatter(points: ProjectionPoint[], width = 640, height = 480): string {
  if (points.length === 0) {
    return `<div class="empty-state">No projection available: too few items.</div>`;
  }
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const [xMin, xMax] = [Math.min(...xs), Math.max(...xs)];
  const [yMin, yMax] = [Math.min(...ys), Math.max(...ys)];
  const pad = 12;
  const sx = (x: number) =>
    xMax === xMin ? width / 2 : pad + ((x - xMin) / (xMax - xMin)) * (width - 2 * pad);
  const sy = (y: number) =>
    yMax === yMin ? height / 2 : pad + ((y - yMin) / (yMax - yMin)) * (height - 2 * pad);
  const types = [...new Set(points.map((p) => p.product_type))].sort();
  const circles = points.map((p) => (
    `<circle class="point" data-item-id="${escapeHtml(p.id)}" cx="${sx(p.x).toFixed(1)}"` +
    ` cy="${sy(p.y).toFixed(1)}" r="4" fill="${typeColor(p.product_type, types)}">` +
    `<title>${escapeHtml(p.title ?? p.id)} (${escapeHtml(p.product_type)})</title>` +
    `</circle>`
  )).join("");
  const legend = types.map((t, i) => (
    `<span class="legend-entry"><span class="legend-dot"` +
    ` style="background:${TYPE_PALETTE[i % TYPE_PALETTE.length]}"></span>` +
    `${escapeHtml(t)}</span>`
  )).join(" ");
  return [
    `<div class="legend">${legend}</div>`,
    `<svg class="scatter" viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">`,
    circles,
    `</svg>`,
  ].join("");
}

export function renderNeighborPanel(
  query: UiItem,
  neighbors: Neighbor[],
  typeFilter: string | null,
  allTypes: string[],
): string {
  const options = allTypes.map((t) => (
    `<option value="${escapeHtml(t)}"${t === typeFilter ? " selected" : ""}>` +
    `${escapeHtml(t)}</option>`
  )).join("");
  const rows = neighbors.map((n) => (
    `<li class="neighbor" data-item-id="${escapeHtml(n.id)}">` +
    `<span class="swatch-dot" style="background:${swatchColor(n)}"></span>` +
    `<span class="neighbor-title">${escapeHtml(n.title ?? n.id)}</span>` +
    `<span class="neighbor-type">${escapeHtml(n.product_type)}</span>` +
    `<span class="neighbor-score">${n.score.toFixed(4)}</span>` +
    `</li>`
  )).join("");
  return [
    `<div class="neighbor-panel" data-query-id="${escapeHtml(query.id)}">`,
    renderItemTile({ ...query, hero: true }, { heroBadge: true }),
    `<label>Nearest in style, type:`,
    ` <select class="type-filter"><option value="">any</option>${options}</select>`,
    `</label>`,
    `<ol class="neighbors">${rows}</ol>`,
    `</div>`,
  ].join("");
}

export class Explorer {
  points: ProjectionPoint[] = [];
  selected: UiItem | null = null;
  typeFilter: string | null = null;
  projectionFetches = 0;

  constructor(private api: Api, private k = 8) {}

  get allTypes(): string[] {
    return [...new Set(this.points.map((p) => p.product_type))].sort();
  }

  async loadScatter(method: "pca" | "tsne" = "pca"): Promise<string> {
    const resp = await this.api.projection(method);
    this.points = resp.points;
    this.projectionFetches += 1;
    return renderScatter(this.points);
  }

  /** Click on a scatter point: fetch that item's nearest compatible items.
   * Only the panel re-queries; the scatter is untouched. */
  async select(itemId: string): Promise<string> {
    const resp = await this.api.neighbors(itemId, {
      type: this.typeFilter ?? undefined,
      k: this.k,
    });
    this.selected = resp.query;
    return renderNeighborPanel(resp.query, resp.neighbors, this.typeFilter, this.allTypes);
  }

  /** Change the type filter and re-query the panel for the current item. */
  async filterByType(productType: string | null): Promise<string | null> {
    this.typeFilter = productType;
    if (!this.selected) return null;
    return this.select(this.selected.id);
  }
}
