/** Client-side playback: one oscillator voice per generated note. */

import type { Beat } from "./beats.js";

/** Equal-tempered frequency with A4 (pitch 69) at 440 Hz. */
export function frequencyForPitch(pitch: number): number {
  return 440 * Math.pow(2, (pitch - 69) / 12);
}

/* Minimal structural views of the Web Audio interfaces actually used,
 * so scheduling is testable without a real AudioContext. */

export interface ParamLike {
  value: number;
  setValueAtTime(value: number, time: number): unknown;
  linearRampToValueAtTime(value: number, time: number): unknown;
}

export interface OscillatorLike {
  type: string;
  frequency: ParamLike;
  connect(target: unknown): unknown;
  start(when: number): void;
  stop(when: number): void;
}

export interface GainLike {
  gain: ParamLike;
  connect(target: unknown): unknown;
}

export interface AudioContextLike {
  currentTime: number;
  destination: unknown;
  createOscillator(): OscillatorLike;
  createGain(): GainLike;
}

export interface ScheduledVoice {
  pitch: number;
  frequency: number;
  startsAt: number;
  stopsAt: number;
}

const ATTACK = 0.01;
const RELEASE = 0.04;
const PEAK_GAIN = 0.5;

/**
 * Schedule one sine voice per note, timed by the beats that produced it.
 *
 * Onsets accumulate rests and durations from time zero, offset by `leadIn`
 * seconds from the context's current time so the first voice is not clipped.
 * Returns a descriptor per scheduled voice, in playback order.
 */
export function schedulePlayback(
  ctx: AudioContextLike,
  pitches: readonly number[],
  beats: readonly Beat[],
  leadIn = 0.05,
): ScheduledVoice[] {
  if (pitches.length !== beats.length) {
    throw new Error(`got ${pitches.length} pitches for ${beats.length} beats`);
  }
  const base = ctx.currentTime + leadIn;
  const voices: ScheduledVoice[] = [];
  let elapsed = 0;

  for (let i = 0; i < pitches.length; i++) {
    const pitch = pitches[i]!;
    const [rest, duration] = beats[i]!;
    elapsed += rest;
    const startsAt = base + elapsed;
    elapsed += duration;
    const stopsAt = base + elapsed;

    const oscillator = ctx.createOscillator();
    const envelope = ctx.createGain();
    oscillator.type = "sine";
    oscillator.frequency.value = frequencyForPitch(pitch);
    oscillator.connect(envelope);
    envelope.connect(ctx.destination);

    const attackEnd = Math.min(startsAt + ATTACK, stopsAt);
    envelope.gain.setValueAtTime(0, startsAt);
    envelope.gain.linearRampToValueAtTime(PEAK_GAIN, attackEnd);
    envelope.gain.setValueAtTime(PEAK_GAIN, stopsAt);
    envelope.gain.linearRampToValueAtTime(0, stopsAt + RELEASE);

    oscillator.start(startsAt);
    oscillator.stop(stopsAt + RELEASE);
    voices.push({ pitch, frequency: frequencyForPitch(pitch), startsAt, stopsAt });
  }
  return voices;
}
