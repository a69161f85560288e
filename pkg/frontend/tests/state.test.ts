import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { applyEvent, applySnapshot, comparable, initialState, layerCards } from "../src/state.js";
import type { CatalogEntry, SessionSnapshot, UiEvent } from "../src/types.js";

const fixturePath = fileURLToPath(new URL("./fixtures/stream_fixture.json", import.meta.url));
const fixture = JSON.parse(readFileSync(fixturePath, "utf-8")) as {
  events: UiEvent[];
  snapshot: SessionSnapshot;
  catalog: { entries: CatalogEntry[] };
};

const catalogTokens = fixture.catalog.entries.map((entry) => entry.token);

function foldAll(events: UiEvent[]) {
  let state = initialState(fixture.snapshot.session_id, catalogTokens);
  for (const event of events) {
    state = applyEvent(state, event);
  }
  return state;
}

describe("event fold", () => {
  it("replaying the recorded 500-event stream matches the server snapshot", () => {
    expect(fixture.events.length).toBeGreaterThanOrEqual(500);
    const state = foldAll(fixture.events);
    const { history_turns: _ignored, ...serverView } = fixture.snapshot;
    expect(comparable(state)).toEqual(serverView);
  });

  it("is a pure function of the ordered stream (same input, same output)", () => {
    const a = foldAll(fixture.events);
    const b = foldAll(fixture.events);
    expect(comparable(a)).toEqual(comparable(b));
    expect(a.feed).toEqual(b.feed);
    expect(a.timings).toEqual(b.timings);
  });

  it("discards out-of-order and duplicate seq events", () => {
    const clean = foldAll(fixture.events);
    const noisy = [...fixture.events];
    // replay a stale slice in the middle and duplicate the tail
    const polluted = [
      ...noisy.slice(0, 300),
      ...noisy.slice(50, 80),
      ...noisy.slice(300),
      ...noisy.slice(480),
    ];
    expect(comparable(foldAll(polluted))).toEqual(comparable(clean));
  });

  it("ignores events for other sessions", () => {
    const state = initialState("mine", catalogTokens);
    const foreign: UiEvent = {
      type: "state_change",
      session_id: "other",
      payload: { state: "recording" },
      seq: 1,
    };
    expect(applyEvent(state, foreign)).toBe(state);
  });

  it("NONE and unknown visual tokens clear the central visual", () => {
    let state = initialState("s", catalogTokens);
    state = applyEvent(state, {
      type: "visual_selected",
      session_id: "s",
      payload: { token: "SST" },
      seq: 1,
    });
    expect(state.centralVisual).toBe("SST");
    state = applyEvent(state, {
      type: "visual_selected",
      session_id: "s",
      payload: { token: "NONE" },
      seq: 2,
    });
    expect(state.centralVisual).toBeNull();
    state = applyEvent(state, {
      type: "visual_selected",
      session_id: "s",
      payload: { token: "NOT_IN_CATALOG" },
      seq: 3,
    });
    expect(state.centralVisual).toBeNull();
  });

  it("layer_on and layer_off maintain activation order", () => {
    let state = initialState("s", catalogTokens);
    const on = (token: string, seq: number): UiEvent => ({
      type: "trigger_event",
      session_id: "s",
      payload: { kind: "layer_on", rule_id: "r", payload: { token }, source_span: [0, 1] },
      seq,
    });
    state = applyEvent(state, on("SST", 1));
    state = applyEvent(state, on("CO2", 2));
    state = applyEvent(state, on("SST", 3)); // already active: no duplicate
    expect(state.activeLayers).toEqual(["SST", "CO2"]);
    state = applyEvent(state, {
      type: "trigger_event",
      session_id: "s",
      payload: { kind: "layer_off", rule_id: "r2", payload: { token: "SST" }, source_span: [0, 1] },
      seq: 4,
    });
    expect(state.activeLayers).toEqual(["CO2"]);
  });

  it("snapshot resync is absolute", () => {
    const drifted = foldAll(fixture.events.slice(0, 100));
    const resynced = applySnapshot(drifted, fixture.snapshot);
    const { history_turns: _ignored, ...serverView } = fixture.snapshot;
    expect(comparable(resynced)).toEqual(serverView);
  });
});

describe("layer cards", () => {
  it("marks at most one globe layer central", () => {
    const state = foldAll(fixture.events);
    const cards = layerCards(state, fixture.catalog.entries);
    const central = cards.filter((card) => card.central);
    expect(central.length).toBeLessThanOrEqual(1);
    if (central.length === 1) {
      expect(central[0]!.token).toBe(fixture.snapshot.central_visual);
    }
    for (const token of fixture.snapshot.active_layers) {
      expect(cards.find((card) => card.token === token)?.active).toBe(true);
    }
  });
});
