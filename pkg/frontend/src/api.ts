/** Typed client for the melody server's JSON API. */

import type { Beat } from "./beats.js";
import type { WireSampler } from "./params.js";

export interface GenerateRequest {
  model: string;
  beats: Beat[];
  sampler: WireSampler;
}

export interface GenerateResponse {
  pitches: number[];
  midi_base64: string;
  log_likelihood: number;
}

export interface ModelInfo {
  name: string;
  kind: string;
  val_accuracy: number;
}

/** The slice of fetch() these helpers need; injectable for tests. */
export type FetchLike = (
  url: string,
  init?: {
    method?: string;
    headers?: Record<string, string>;
    body?: string;
    signal?: AbortSignal;
  },
) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`server returned ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function errorFrom(response: { status: number; json(): Promise<unknown> }): Promise<ApiError> {
  let detail = "unknown error";
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") {
      detail = body.detail;
    } else if (body.detail !== undefined) {
      detail = JSON.stringify(body.detail);
    }
  } catch {
    // response body was not JSON; keep the placeholder
  }
  return new ApiError(response.status, detail);
}

export async function generateMelody(
  baseUrl: string,
  request: GenerateRequest,
  fetchImpl: FetchLike = fetch,
  signal?: AbortSignal,
): Promise<GenerateResponse> {
  const response = await fetchImpl(`${baseUrl.replace(/\/$/, "")}/api/generate`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(request),
    signal,
  });
  if (!response.ok) {
    throw await errorFrom(response);
  }
  return (await response.json()) as GenerateResponse;
}

export async function listModels(
  baseUrl: string,
  fetchImpl: FetchLike = fetch,
): Promise<ModelInfo[]> {
  const response = await fetchImpl(`${baseUrl.replace(/\/$/, "")}/api/models`, {
    method: "GET",
  });
  if (!response.ok) {
    throw await errorFrom(response);
  }
  return (await response.json()) as ModelInfo[];
}
