/** Browser entry point: wires the rating flow and the style explorer to the
 * DOM. All state lives server-side; the only client state is the user id. */

import { Api } from "./api.js";
import { Explorer } from "./explorer.js";
import { RatingFlow } from "./rating.js";

const api = new Api("");

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function currentUser(): string {
  const params = new URLSearchParams(window.location.search);
  const fromUrl = params.get("user");
  if (fromUrl) return fromUrl;
  let stored = window.localStorage.getItem("stylespace-user");
  if (!stored) {
    stored = `user-${Math.random().toString(36).slice(2, 10)}`;
    window.localStorage.setItem("stylespace-user", stored);
  }
  return stored;
}

async function mountRating(root: HTMLElement): Promise<void> {
  const flow = new RatingFlow(api, currentUser());
  const show = async () => {
    const view = await flow.advance();
    root.innerHTML = view.html;
    if (view.kind !== "rating") return;
    root.querySelectorAll<HTMLButtonElement>("button[data-rating]").forEach((button) => {
      button.addEventListener("click", async () => {
        const rating = button.dataset.rating === "1" ? 1 : 0;
        if (await flow.submit(rating)) await show();
      });
    });
  };
  await show();
}

async function mountExplorer(root: HTMLElement): Promise<void> {
  const explorer = new Explorer(api);
  root.innerHTML = `<div id="scatter-pane">loading projection...</div>`
    + `<div id="neighbor-pane"></div>`;
  const scatterPane = el("scatter-pane");
  const neighborPane = el("neighbor-pane");
  try {
    scatterPane.innerHTML = await explorer.loadScatter("pca");
  } catch (err) {
    scatterPane.innerHTML = `<div class="empty-state">${String(err)}</div>`;
    return;
  }
  const wirePanel = () => {
    const select = neighborPane.querySelector<HTMLSelectElement>("select.type-filter");
    select?.addEventListener("change", async () => {
      const html = await explorer.filterByType(select.value || null);
      if (html !== null) {
        neighborPane.innerHTML = html;
        wirePanel();
      }
    });
  };
  scatterPane.addEventListener("click", async (event) => {
    const target = event.target as Element | null;
    const circle = target?.closest<SVGElement>("circle.point");
    const itemId = circle?.dataset.itemId;
    if (!itemId) return;
    neighborPane.innerHTML = await explorer.select(itemId);
    wirePanel();
  });
}

async function main(): Promise<void> {
  const tabs = el("tabs");
  const root = el("screen");
  const screens: Record<string, (node: HTMLElement) => Promise<void>> = {
    rate: mountRating,
    explore: mountExplorer,
  };
  const activate = async (name: string) => {
    tabs.querySelectorAll("button").forEach((b) =>
      b.classList.toggle("active", b.dataset.screen === name));
    root.innerHTML = "";
    await screens[name](root);
  };
  tabs.querySelectorAll<HTMLButtonElement>("button[data-screen]").forEach((button) => {
    button.addEventListener("click", () => activate(button.dataset.screen!));
  });
  await activate("rate");
}

main().catch((err) => {
  document.body.insertAdjacentHTML("beforeend",
    `<pre class="fatal">${String(err)}</pre>`);
});
