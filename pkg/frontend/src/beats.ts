/** Turning raw key-press timing into beat sequences. */

/** One captured beat: seconds of silence before the note, then its length. */
export type Beat = [rest: number, duration: number];

export interface TapEvent {
  kind: "down" | "up";
  /** Milliseconds on a monotonic clock (performance.now()). */
  timestamp: number;
}

export type WarnSink = (message: string) => void;

const MS_PER_SECOND = 1000;

/**
 * Convert an alternating down/up event stream into beats.
 *
 * duration_i = up_i - down_i and rest_i = down_i - up_(i-1), with the first
 * rest pinned to 0 so melodies always start immediately.  Timestamps are
 * milliseconds; beats come out in seconds.
 *
 * Malformed events are dropped, never fatal: an `up` with no `down` pending
 * is ignored, and a second `down` while a key is already held keeps the
 * first press.  Both report through `warn` so the UI can show what happened.
 */
export function captureBeats(events: readonly TapEvent[], warn: WarnSink = () => {}): Beat[] {
  const beats: Beat[] = [];
  let pendingDown: number | null = null;
  let previousUp: number | null = null;

  for (const event of events) {
    if (event.kind === "down") {
      if (pendingDown !== null) {
        warn(`tap at ${event.timestamp}ms ignored: previous tap still held`);
        continue;
      }
      pendingDown = event.timestamp;
    } else {
      if (pendingDown === null) {
        warn(`release at ${event.timestamp}ms ignored: no tap in progress`);
        continue;
      }
      const duration = (event.timestamp - pendingDown) / MS_PER_SECOND;
      const rest = previousUp === null ? 0 : (pendingDown - previousUp) / MS_PER_SECOND;
      beats.push([rest, duration]);
      previousUp = event.timestamp;
      pendingDown = null;
    }
  }
  return beats;
}

/** Collects tap events as they happen and exposes the beats so far. */
export class TapRecorder {
  private events: TapEvent[] = [];

  constructor(private readonly warn: WarnSink = () => {}) {}

  down(timestamp: number): void {
    this.events.push({ kind: "down", timestamp });
  }

  up(timestamp: number): void {
    this.events.push({ kind: "up", timestamp });
  }

  beats(): Beat[] {
    return captureBeats(this.events, this.warn);
  }

  /** Completed beats only; a held key does not count until released. */
  count(): number {
    return this.beats().length;
  }

  clear(): void {
    this.events = [];
  }
}
