// Thin typed client for the gateway's HTTP surface.

import type { CatalogEntry, QueryResult, SessionSnapshot } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class GatewayError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

export class GatewayClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw new GatewayError(`${path} failed: ${response.status}`, response.status);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("/api/health");
  }

  async catalog(): Promise<CatalogEntry[]> {
    const body = await this.request<{ entries: CatalogEntry[] }>("/api/catalog");
    return body.entries;
  }

  snapshot(sessionId: string): Promise<SessionSnapshot> {
    return this.request(`/api/session/${encodeURIComponent(sessionId)}`);
  }

  transcript(sessionId: string): Promise<{ records: Record<string, unknown>[] }> {
    return this.request(`/api/transcript/${encodeURIComponent(sessionId)}`);
  }

  query(sessionId: string, text: string): Promise<QueryResult> {
    return this.request("/api/query", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, text }),
    });
  }

  forceVisual(sessionId: string, token: string): Promise<{ session_id: string; token: string }> {
    return this.request("/api/visual", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, token }),
    });
  }

  reloadRules(): Promise<{ version: number }> {
    return this.request("/api/reload/rules", { method: "POST" });
  }
}
