// Browser entry point: wires the headless controllers to the DOM.

import { GatewayClient } from "./api.js";
import { ConsoleController } from "./console.js";
import { OperatorPanel } from "./operator.js";
import { comparable, initialState, layerCards, type ConsoleViewState } from "./state.js";
import { EventStreamClient } from "./stream.js";
import type { CatalogEntry } from "./types.js";

const SESSION_ID = new URLSearchParams(location.search).get("session") ?? "console-1";
const BASE = location.origin;

function element<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function renderLayers(state: ConsoleViewState, catalog: CatalogEntry[]): void {
  const panel = element<HTMLDivElement>("layers");
  panel.innerHTML = "";
  for (const card of layerCards(state, catalog)) {
    const div = document.createElement("div");
    div.className = `card ${card.kind}${card.active ? " active" : ""}${card.central ? " central" : ""}`;
    div.innerHTML = `<strong>${card.title}</strong><span>${card.token}</span>`;
    panel.appendChild(div);
  }
}

function renderFeed(state: ConsoleViewState): void {
  const feed = element<HTMLUListElement>("feed");
  feed.innerHTML = "";
  for (const entry of [...state.feed].slice(-12).reverse()) {
    const item = document.createElement("li");
    item.textContent = `#${entry.seq} ${entry.type}: ${entry.summary}`;
    feed.appendChild(item);
  }
}

function renderTimings(state: ConsoleViewState): void {
  const timings = element<HTMLPreElement>("timings");
  timings.textContent = Object.entries(state.timings)
    .map(([stage, seconds]) => `${stage.padEnd(10)} ${(seconds * 1000).toFixed(1)} ms`)
    .join("\n");
}

async function boot(): Promise<void> {
  const api = new GatewayClient(BASE);
  const catalog = await api.catalog();
  const tokens = catalog.map((entry) => entry.token);

  const stateBadge = element<HTMLSpanElement>("session-state");
  const subtitleLine = element<HTMLDivElement>("subtitle");
  const responseBox = element<HTMLDivElement>("response");

  const stream = new EventStreamClient({
    url: `${BASE.replace(/^http/, "ws")}/ws/events`,
    initial: initialState(SESSION_ID, tokens),
    fetchSnapshot: () => api.snapshot(SESSION_ID),
    onChange: (state) => {
      stateBadge.textContent = state.state;
      stateBadge.dataset["state"] = state.state;
      if (state.lastSubtitle !== null) subtitleLine.textContent = state.lastSubtitle;
      renderLayers(state, catalog);
      renderFeed(state);
      renderTimings(state);
      console.debug("view", comparable(state));
    },
  });
  stream.connect();

  const controller = new ConsoleController(api, SESSION_ID, (text) => {
    subtitleLine.textContent = text ?? "";
  });

  const input = element<HTMLInputElement>("query-input");
  const submit = element<HTMLButtonElement>("query-submit");
  input.addEventListener("input", () => {
    submit.disabled = !controller.canSubmit(input.value);
  });
  submit.disabled = true;
  submit.addEventListener("click", () => {
    void controller.submitQuery(input.value).then((result) => {
      responseBox.textContent = result.response_text;
      input.value = "";
      submit.disabled = true;
    });
  });

  const operator = new OperatorPanel(api, tokens);
  const tokenSelect = element<HTMLSelectElement>("force-token");
  for (const token of ["NONE", ...tokens]) {
    const option = document.createElement("option");
    option.value = token;
    option.textContent = token;
    tokenSelect.appendChild(option);
  }
  element<HTMLButtonElement>("force-visual").addEventListener("click", () => {
    void operator.forceVisual(SESSION_ID, tokenSelect.value);
  });
  element<HTMLButtonElement>("reload-rules").addEventListener("click", () => {
    void operator.reloadRules().then(({ version }) => {
      element<HTMLSpanElement>("rules-version").textContent = `rules v${version}`;
    });
  });
}

void boot();
