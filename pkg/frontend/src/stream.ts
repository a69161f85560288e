// Live event-stream subscription with reconnect, backoff, and snapshot resync.
//
// On every (re)connect the client fetches the server's session snapshot and
// applies it absolutely, then folds stream events on top; events whose seq is
// not strictly above the applied snapshot/event seq are discarded, so
// replays, duplicates, and out-of-order deliveries cannot corrupt the state.

import { applyEvent, applySnapshot, type ConsoleViewState } from "./state.js";
import type { SessionSnapshot, UiEvent } from "./types.js";

export interface WebSocketLike {
  onopen: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => WebSocketLike;
export type Timer = (fn: () => void, delayMs: number) => void;

export interface StreamClientOptions {
  url: string;
  initial: ConsoleViewState;
  fetchSnapshot: () => Promise<SessionSnapshot>;
  socketFactory?: SocketFactory;
  timer?: Timer;
  /** Reconnect delays; the last entry repeats. */
  backoffMs?: readonly number[];
  onChange?: (state: ConsoleViewState) => void;
}

const DEFAULT_BACKOFF_MS = [250, 500, 1000, 2000, 5000] as const;

export class EventStreamClient {
  private stateValue: ConsoleViewState;
  private socket: WebSocketLike | null = null;
  private attempts = 0;
  private closed = false;
  private synced = false;
  private pending: UiEvent[] = [];

  constructor(private readonly options: StreamClientOptions) {
    this.stateValue = options.initial;
  }

  get state(): ConsoleViewState {
    return this.stateValue;
  }

  get reconnectAttempts(): number {
    return this.attempts;
  }

  connect(): void {
    if (this.closed) return;
    const factory =
      this.options.socketFactory ??
      ((url: string) => new WebSocket(url) as unknown as WebSocketLike);
    const socket = factory(this.options.url);
    this.socket = socket;
    this.synced = false;
    this.pending = [];
    socket.onopen = () => {
      void this.resync();
    };
    socket.onmessage = (message) => {
      const event = JSON.parse(message.data) as UiEvent;
      if (this.synced) {
        this.update(applyEvent(this.stateValue, event));
      } else {
        this.pending.push(event); // buffered until the snapshot lands
      }
    };
    socket.onclose = () => this.scheduleReconnect();
    socket.onerror = () => socket.close();
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }

  /** Simulates a dropped connection (also used by tests). */
  dropConnection(): void {
    this.socket?.close();
    this.scheduleReconnect();
  }

  private async resync(): Promise<void> {
    try {
      const snapshot = await this.options.fetchSnapshot();
      this.attempts = 0;
      this.update(applySnapshot(this.stateValue, snapshot));
    } catch {
      this.socket?.close();
      this.scheduleReconnect();
      return;
    }
    this.synced = true;
    const buffered = this.pending;
    this.pending = [];
    let state = this.stateValue;
    for (const event of buffered) {
      state = applyEvent(state, event);
    }
    this.update(state);
  }

  private scheduleReconnect(): void {
    if (this.closed || this.socket === null) return;
    this.socket = null;
    const schedule = this.options.backoffMs ?? DEFAULT_BACKOFF_MS;
    const delay = schedule[Math.min(this.attempts, schedule.length - 1)] ?? 0;
    this.attempts += 1;
    const timer: Timer = this.options.timer ?? ((fn, ms) => setTimeout(fn, ms));
    timer(() => this.connect(), delay);
  }

  private update(state: ConsoleViewState): void {
    this.stateValue = state;
    this.options.onChange?.(state);
  }
}
