/**
 * End-to-end acceptance of the UI against the real backend service.
 *
 * A scripted session of 2 simulated users rating 20 outfits per group must
 * store exactly 80 rating records, the two users must see different outfit
 * orders, the results screen must show the same analysis as the raw
 * results endpoint, and the explorer's neighbor panel must match the
 * neighbors endpoint for 10 spot-checked items.
 *
 * Requires python3 with the backend package installed; skipped otherwise.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { Api } from "../src/api.js";
import { Explorer } from "../src/explorer.js";
import { RatingFlow, renderResults } from "../src/rating.js";

const PORT = 8641;
const BASE = `http://127.0.0.1:${PORT}`;

function havePython(): boolean {
  try {
    execFileSync("python3", ["-c", "import stylespace"], { stdio: "ignore" });
    return true;
  } catch {
    return false;
  }
}

const enabled = havePython();
let workdir = "";
let server: ChildProcess | null = null;

function cli(args: string[]): void {
  execFileSync("python3", ["-m", "stylespace.cli", ...args], {
    stdio: ["ignore", "ignore", "inherit"],
    timeout: 180_000,
  });
}

async function waitForServer(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const resp = await fetch(`${BASE}/items`);
      if (resp.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  if (!enabled) return;
  workdir = mkdtempSync(join(tmpdir(), "stylespace-ui-"));
  const smallArch = ["--d-text", "16", "--d-vis", "16", "--d-cat", "8",
                     "--d-hidden", "16", "--d-out", "16"];
  cli(["synth", "--out", workdir, "--seed", "7", "--items-per-type", "20",
       "--clusters", "4", "--outfits-total", "160"]);
  cli(["split", "--catalog", join(workdir, "catalog.jsonl"),
       "--outfits", join(workdir, "outfits.jsonl"),
       "--out", join(workdir, "split.jsonl"), "--seed", "0"]);
  cli(["train", "--catalog", join(workdir, "catalog.jsonl"),
       "--outfits", join(workdir, "outfits.jsonl"),
       "--split", join(workdir, "split.jsonl"),
       "--out", join(workdir, "params.npz"),
       "--epochs", "3", "--dropout", "0", "--seed", "1", ...smallArch]);
  // 2 templates x 10 heroes -> 20 outfits per group
  cli(["abtest", "--catalog", join(workdir, "catalog.jsonl"),
       "--params", join(workdir, "params.npz"),
       "--outfits", join(workdir, "outfits.jsonl"),
       "--out", join(workdir, "eval.jsonl"),
       "--templates", "2", "--outfits-per-template", "10",
       "--beam-width", "2", "--seed", "3"]);
  server = spawn("python3", ["-m", "stylespace.cli", "serve",
    "--catalog", join(workdir, "catalog.jsonl"),
    "--params", join(workdir, "params.npz"),
    "--outfits", join(workdir, "outfits.jsonl"),
    "--eval-outfits", join(workdir, "eval.jsonl"),
    "--ratings-log", join(workdir, "ratings.jsonl"),
    "--clusters", join(workdir, "clusters.jsonl"),
    "--port", String(PORT)], { stdio: ["ignore", "ignore", "inherit"] });
  await waitForServer();
}, 240_000);

afterAll(() => {
  server?.kill();
  if (workdir) rmSync(workdir, { recursive: true, force: true });
});

describe.runIf(enabled)("scripted rating session", () => {
  it("stores 80 records over 2 users x 40 outfits, with per-user orders"
    + " differing and the results screen matching the results endpoint",
  async () => {
    const api = new Api(BASE);
    const orders: Record<string, string[]> = {};
    let lastView: Awaited<ReturnType<RatingFlow["advance"]>> | null = null;
    for (const [user, bias] of [["rater-a", 0], ["rater-b", 1]] as const) {
      const flow = new RatingFlow(api, user);
      for (;;) {
        const view = await flow.advance();
        if (view.kind !== "rating") {
          lastView = view;
          break;
        }
        // deterministic judgment from the outfit's pair index
        const index = Number(view.outfitId.split("-").at(-1));
        const rating = ((index + Number(bias)) % 2) as 0 | 1;
        expect(await flow.submit(rating)).toBe(true);
      }
      expect(flow.ratedOrder).toHaveLength(40);
      expect(flow.progress.total).toBe(40);
      orders[user] = [...flow.ratedOrder];
    }
    expect(orders["rater-a"]).not.toEqual(orders["rater-b"]);
    expect([...orders["rater-a"]].sort()).toEqual([...orders["rater-b"]].sort());

    // exactly 80 stored records: 2 users x (20 test + 20 control)
    const results = await api.abtestResults();
    expect(results.control.n_observations + results.test.n_observations).toBe(80);
    expect(results.control.n_users).toBe(2);
    expect(results.control.n_outfits).toBe(20);
    expect(results.test.n_outfits).toBe(20);

    // the completion screen rendered exactly the endpoint's analysis
    expect(lastView?.kind).toBe("results");
    if (lastView?.kind === "results") {
      expect(lastView.result).toEqual(results);
      expect(lastView.html).toBe(renderResults(results));
    }
  }, 120_000);

  it("explorer neighbor panel matches the neighbors endpoint for 10 items",
  async () => {
    const api = new Api(BASE);
    const explorer = new Explorer(api, 5);
    await explorer.loadScatter("pca");
    const itemIds = explorer.points.slice(0, 10).map((p) => p.id);
    expect(itemIds).toHaveLength(10);
    for (const itemId of itemIds) {
      const html = await explorer.select(itemId);
      const endpoint = await api.neighbors(itemId, { k: 5 });
      for (const neighbor of endpoint.neighbors) {
        expect(html).toContain(`data-item-id="${neighbor.id}"`);
        expect(html).toContain(neighbor.score.toFixed(4));
      }
      const listed = [...html.matchAll(/class="neighbor" data-item-id="([^"]+)"/g)]
        .map((m) => m[1]);
      expect(listed).toEqual(endpoint.neighbors.map((n) => n.id));
    }
  }, 60_000);
});
