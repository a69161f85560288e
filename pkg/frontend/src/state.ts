// Pure fold from the ordered event stream (plus fetched snapshots) to the
// console's view state. Replaying a recorded stream reproduces the exact
// final state; the comparable projection matches the server's session
// snapshot field for field.

import type {
  CatalogEntry,
  FeedEntry,
  LayerViewState,
  SessionSnapshot,
  UiEvent,
} from "./types.js";

const FEED_LIMIT = 100;
export const NONE_TOKEN = "NONE";

export interface ConsoleViewState {
  sessionId: string;
  /** Tokens of the fetched catalog; visual selections outside it collapse to null. */
  catalogTokens: readonly string[];
  state: string;
  centralVisual: string | null;
  /** Active layer tokens in activation order. */
  activeLayers: readonly string[];
  /** Per-layer activation seq, for card ordering and highlights. */
  activatedAt: Readonly<Record<string, number>>;
  seq: number;
  lastSubtitle: string | null;
  timings: Readonly<Record<string, number>>;
  feed: readonly FeedEntry[];
}

export function initialState(
  sessionId: string,
  catalogTokens: readonly string[] = [],
): ConsoleViewState {
  return {
    sessionId,
    catalogTokens,
    state: "idle",
    centralVisual: null,
    activeLayers: [],
    activatedAt: {},
    seq: 0,
    lastSubtitle: null,
    timings: {},
    feed: [],
  };
}

function summarize(event: UiEvent): string {
  const p = event.payload;
  switch (event.type) {
    case "state_change":
      return `state → ${String(p["state"])}`;
    case "visual_selected":
      return `visual ${String(p["token"])}${p["forced"] ? " (operator)" : ""}`;
    case "trigger_event":
      return `${String(p["kind"])} ${String(p["rule_id"])}`;
    case "subtitle":
      return String(p["text"]);
    case "stage_timing":
      return `${String(p["stage"])} ${(Number(p["seconds"]) * 1000).toFixed(1)} ms`;
  }
}

function pushFeed(feed: readonly FeedEntry[], event: UiEvent): readonly FeedEntry[] {
  const next = [...feed, { seq: event.seq, type: event.type, summary: summarize(event) }];
  return next.length > FEED_LIMIT ? next.slice(next.length - FEED_LIMIT) : next;
}

/** Apply one stream event. Events for other sessions and events whose seq is
 * not strictly above the last applied one are discarded. */
export function applyEvent(state: ConsoleViewState, event: UiEvent): ConsoleViewState {
  if (event.session_id !== state.sessionId) return state;
  if (event.seq <= state.seq) return state;

  const next: ConsoleViewState = { ...state, seq: event.seq, feed: pushFeed(state.feed, event) };
  const p = event.payload;
  switch (event.type) {
    case "state_change": {
      next.state = String(p["state"]);
      break;
    }
    case "visual_selected": {
      const token = String(p["token"]);
      // mirrors the server: NONE and non-catalog tokens mean no central visual
      next.centralVisual =
        token !== NONE_TOKEN && state.catalogTokens.includes(token) ? token : null;
      break;
    }
    case "trigger_event": {
      const kind = String(p["kind"]);
      const inner = (p["payload"] ?? {}) as Record<string, unknown>;
      const token = typeof inner["token"] === "string" ? (inner["token"] as string) : null;
      if (kind === "layer_on" && token && !state.activeLayers.includes(token)) {
        next.activeLayers = [...state.activeLayers, token];
        next.activatedAt = { ...state.activatedAt, [token]: event.seq };
      } else if (kind === "layer_off" && token) {
        next.activeLayers = state.activeLayers.filter((t) => t !== token);
        const { [token]: _dropped, ...rest } = state.activatedAt;
        next.activatedAt = rest;
      }
      break;
    }
    case "subtitle": {
      next.lastSubtitle = String(p["text"]);
      break;
    }
    case "stage_timing": {
      next.timings = { ...state.timings, [String(p["stage"])]: Number(p["seconds"]) };
      break;
    }
  }
  return next;
}

/** Absolute resync from the server's snapshot (used on connect/reconnect). */
export function applySnapshot(state: ConsoleViewState, snapshot: SessionSnapshot): ConsoleViewState {
  const activatedAt: Record<string, number> = {};
  for (const token of snapshot.active_layers) {
    activatedAt[token] = state.activatedAt[token] ?? snapshot.seq;
  }
  return {
    ...state,
    state: snapshot.state,
    centralVisual: snapshot.central_visual,
    activeLayers: [...snapshot.active_layers],
    activatedAt,
    seq: snapshot.seq,
  };
}

/** Projection matching GET /api/session for snapshot diffs (the server also
 * reports history_turns, which is not derivable from the event stream). */
export function comparable(state: ConsoleViewState): {
  session_id: string;
  state: string;
  central_visual: string | null;
  active_layers: string[];
  seq: number;
} {
  return {
    session_id: state.sessionId,
    state: state.state,
    central_visual: state.centralVisual,
    active_layers: [...state.activeLayers],
    seq: state.seq,
  };
}

/** Derive the layer panel cards; exactly the fetched catalog, with the
 * selected globe layer marked central. */
export function layerCards(state: ConsoleViewState, catalog: CatalogEntry[]): LayerViewState[] {
  return catalog.map((entry) => ({
    token: entry.token,
    title: entry.title,
    kind: entry.kind,
    active: state.activeLayers.includes(entry.token) || state.centralVisual === entry.token,
    activated_at: state.activatedAt[entry.token] ?? null,
    central: state.centralVisual === entry.token,
  }));
}
