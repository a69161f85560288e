// Operator drawer actions: force a visual, reload trigger rules, read timings.
// Tokens are validated client-side against the fetched catalog, so no UI
// action can submit a token the server does not know.

import type { GatewayClient } from "./api.js";
import { NONE_TOKEN } from "./state.js";

export class OperatorPanel {
  private readonly tokens: ReadonlySet<string>;

  constructor(
    private readonly api: GatewayClient,
    catalogTokens: readonly string[],
  ) {
    this.tokens = new Set(catalogTokens);
  }

  /** NONE (clear the central visual) is always allowed; anything else must
   * come from the fetched catalog. */
  canForce(token: string): boolean {
    return token === NONE_TOKEN || this.tokens.has(token);
  }

  async forceVisual(sessionId: string, token: string): Promise<{ token: string }> {
    if (!this.canForce(token)) {
      throw new Error(`token ${token} is not in the catalog`);
    }
    return this.api.forceVisual(sessionId, token);
  }

  reloadRules(): Promise<{ version: number }> {
    return this.api.reloadRules();
  }
}
