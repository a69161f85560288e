// Wire types mirroring the gateway's HTTP and event-stream schemas.

export type SessionStateName =
  | "idle"
  | "engaged"
  | "recording"
  | "processing"
  | "responding";

export type UiEventType =
  | "state_change"
  | "visual_selected"
  | "trigger_event"
  | "subtitle"
  | "stage_timing";

export interface UiEvent {
  type: UiEventType;
  session_id: string;
  payload: Record<string, unknown>;
  seq: number;
}

export interface SessionSnapshot {
  session_id: string;
  state: string;
  central_visual: string | null;
  active_layers: string[];
  history_turns: number;
  seq: number;
}

export type VisualKindName = "globe-layer" | "video-overlay";

export interface CatalogEntry {
  token: string;
  title: string;
  description: string;
  kind: VisualKindName;
  asset_ref: string;
}

export interface SubtitleCue {
  text: string;
  start_s: number;
  duration_s: number;
}

export interface RetrievalHitView {
  sent_id: string;
  para_id: string;
  score: number;
  sentence_text: string;
  paragraph_text: string;
}

export interface TriggerEventView {
  kind: string;
  rule_id: string;
  payload: Record<string, unknown>;
  source_span: [number, number];
}

export interface QueryResult {
  session_id: string;
  query: string;
  rewritten: string;
  hits: RetrievalHitView[];
  visual: { token: string; rationale_text: string };
  response_text: string;
  events: TriggerEventView[];
  subtitles: SubtitleCue[];
  synthesis: { audio_handle: string; duration_s: number };
  timings: Record<string, number>;
  issued_at: number;
}

/** One card in the layer panel; at most one globe-layer is central at a time. */
export interface LayerViewState {
  token: string;
  title: string;
  kind: VisualKindName;
  active: boolean;
  activated_at: number | null;
  central: boolean;
}

export interface FeedEntry {
  seq: number;
  type: UiEventType;
  summary: string;
}
