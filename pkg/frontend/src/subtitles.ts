// Subtitle pacing against the server-reported synthesis duration. The UI
// stays stateless about audio: cue timing derives purely from the clip length.

import type { SubtitleCue } from "./types.js";

export const SUBTITLE_GROUP_WORDS = 6;

/** Word-grouped cues whose durations split the clip proportionally;
 * mirrors the server's pacing so locally computed cues line up with the
 * streamed ones. */
export function paceSubtitles(text: string, totalDurationS: number): SubtitleCue[] {
  const words = text.split(/\s+/).filter((w) => w.length > 0);
  if (words.length === 0) return [];
  const cues: SubtitleCue[] = [];
  let elapsed = 0;
  for (let i = 0; i < words.length; i += SUBTITLE_GROUP_WORDS) {
    const group = words.slice(i, i + SUBTITLE_GROUP_WORDS);
    const share = (totalDurationS * group.length) / words.length;
    cues.push({ text: group.join(" "), start_s: elapsed, duration_s: share });
    elapsed += share;
  }
  return cues;
}

export type ShowSubtitle = (text: string | null) => void;
export type SubtitleTimer = (fn: () => void, delayMs: number) => void;

export class SubtitleScheduler {
  constructor(
    private readonly show: ShowSubtitle,
    private readonly timer: SubtitleTimer = (fn, ms) => setTimeout(fn, ms),
  ) {}

  /** Schedule the cues; returns the total visible duration in seconds. */
  play(cues: readonly SubtitleCue[]): number {
    let total = 0;
    for (const cue of cues) {
      this.timer(() => this.show(cue.text), cue.start_s * 1000);
      total = Math.max(total, cue.start_s + cue.duration_s);
    }
    this.timer(() => this.show(null), total * 1000);
    return total;
  }
}
