// Headless console controller: query submission with paced subtitles and
// layer highlighting. The DOM layer delegates here so behavior is testable
// without a browser.

import type { GatewayClient } from "./api.js";
import { NONE_TOKEN } from "./state.js";
import { SubtitleScheduler, type ShowSubtitle, type SubtitleTimer } from "./subtitles.js";
import type { QueryResult } from "./types.js";

export class ConsoleController {
  private readonly scheduler: SubtitleScheduler;
  private busy = false;

  constructor(
    private readonly api: GatewayClient,
    private readonly sessionId: string,
    showSubtitle: ShowSubtitle,
    timer?: SubtitleTimer,
  ) {
    this.scheduler = new SubtitleScheduler(showSubtitle, timer);
  }

  /** Empty or whitespace-only input keeps the submit control disabled. */
  canSubmit(text: string): boolean {
    return text.trim().length > 0 && !this.busy;
  }

  async submitQuery(text: string): Promise<QueryResult> {
    if (!this.canSubmit(text)) {
      throw new Error("nothing to submit");
    }
    this.busy = true;
    try {
      const result = await this.api.query(this.sessionId, text.trim());
      this.scheduler.play(result.subtitles);
      return result;
    } finally {
      this.busy = false;
    }
  }

  /** Token of the layer card to highlight for a result, if any. */
  highlightedLayer(result: QueryResult): string | null {
    return result.visual.token === NONE_TOKEN ? null : result.visual.token;
  }
}
