/** Deterministic color swatches for items without product imagery.
 *
 * Synthetic items carry a latent style-cluster index; items of one cluster
 * share a hue so generated outfits read as visually coherent. Items without
 * a cluster fall back to a stable hash of their id.
 */

const GOLDEN_ANGLE = 137.508;

export function hashString(text: string): number {
  let h = 2166136261;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 16777619) >>> 0;
  }
  return h >>> 0;
}

export function swatchColor(item: { id: string; cluster: number | null }): string {
  const index = item.cluster !== null && item.cluster !== undefined
    ? item.cluster
    : hashString(item.id) % 360;
  const hue = (index * GOLDEN_ANGLE) % 360;
  const lightness = 42 + (hashString(item.id) % 21);
  return `hsl(${hue.toFixed(1)}, 62%, ${lightness}%)`;
}
