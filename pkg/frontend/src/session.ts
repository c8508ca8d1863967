/** Session state: captured beats, chosen model, parameters, last result. */

import { TapRecorder, type Beat, type WarnSink } from "./beats.js";
import {
  ApiError,
  generateMelody,
  type FetchLike,
  type GenerateRequest,
  type GenerateResponse,
} from "./api.js";
import { DEFAULT_PARAMS, toWireSampler, withEdit, type SamplerParams } from "./params.js";

export type SessionStatus = "idle" | "generating" | "done" | "error";

export interface SessionOptions {
  baseUrl: string;
  fetchImpl?: FetchLike;
  warn?: WarnSink;
}

/**
 * One user's tap-and-generate loop.
 *
 * Captured beats are never mutated by anything the server does: a failed
 * request leaves them (and the parameters) exactly as they were, so the
 * user can retry immediately.  Starting a new request aborts and supersedes
 * any request still in flight; only the newest request may touch state.
 */
export class UISession {
  readonly recorder: TapRecorder;
  params: SamplerParams = { ...DEFAULT_PARAMS };
  model: string | null = null;
  status: SessionStatus = "idle";
  error: string | null = null;
  lastResponse: GenerateResponse | null = null;
  lastRequest: GenerateRequest | null = null;

  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;
  private inflight: AbortController | null = null;
  private ticket = 0;

  constructor(options: SessionOptions) {
    this.baseUrl = options.baseUrl;
    this.fetchImpl = options.fetchImpl ?? (fetch as FetchLike);
    this.recorder = new TapRecorder(options.warn ?? (() => {}));
  }

  beats(): Beat[] {
    return this.recorder.beats();
  }

  /** Generation needs at least one completed beat and a chosen model. */
  canGenerate(): boolean {
    return this.model !== null && this.recorder.count() > 0;
  }

  setParam(name: keyof SamplerParams, value: number): void {
    this.params = withEdit(this.params, name, value);
  }

  clearTaps(): void {
    this.recorder.clear();
  }

  /**
   * Send the current beats and parameters to the server.
   *
   * Resolves with the response, or null when this request was superseded
   * by a newer one.  Failures set `error` and leave everything else alone.
   */
  async generate(): Promise<GenerateResponse | null> {
    if (!this.canGenerate()) {
      throw new Error("capture at least one beat and pick a model first");
    }
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    const ticket = ++this.ticket;

    const request: GenerateRequest = {
      model: this.model!,
      beats: this.beats(),
      sampler: toWireSampler(this.params),
    };
    this.status = "generating";
    this.error = null;

    try {
      const response = await generateMelody(this.baseUrl, request, this.fetchImpl, controller.signal);
      if (ticket !== this.ticket) {
        return null; // a newer request owns the session now
      }
      this.lastRequest = request;
      this.lastResponse = response;
      this.status = "done";
      return response;
    } catch (failure) {
      if (ticket !== this.ticket) {
        return null; // aborted because a newer request superseded this one
      }
      this.status = "error";
      this.error =
        failure instanceof ApiError
          ? failure.message
          : `request failed: ${failure instanceof Error ? failure.message : String(failure)}`;
      return null;
    } finally {
      if (this.inflight === controller) {
        this.inflight = null;
      }
    }
  }
}
