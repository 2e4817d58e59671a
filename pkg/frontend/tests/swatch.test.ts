import { describe, expect, it } from "vitest";

import { hashString, swatchColor } from "../src/swatch.js";

describe("swatchColor", () => {
  it("is deterministic for the same item", () => {
    const item = { id: "dresses-0001", cluster: 4 };
    expect(swatchColor(item)).toBe(swatchColor({ ...item }));
  });

  it("gives items of one cluster the same hue", () => {
    const a = swatchColor({ id: "a", cluster: 7 });
    const b = swatchColor({ id: "b", cluster: 7 });
    const hue = (c: string) => c.split("(")[1].split(",")[0];
    expect(hue(a)).toBe(hue(b));
  });

  it("separates different clusters", () => {
    const a = swatchColor({ id: "x", cluster: 1 });
    const b = swatchColor({ id: "x", cluster: 2 });
    expect(a).not.toBe(b);
  });

  it("falls back to an id hash without a cluster", () => {
    const a = swatchColor({ id: "alpha", cluster: null });
    const b = swatchColor({ id: "alpha", cluster: null });
    expect(a).toBe(b);
    expect(swatchColor({ id: "beta", cluster: null })).not.toBe(a);
  });
});

describe("hashString", () => {
  it("is stable and spreads values", () => {
    expect(hashString("abc")).toBe(hashString("abc"));
    const values = new Set(["a", "b", "c", "d", "e"].map(hashString));
    expect(values.size).toBe(5);
  });
});
