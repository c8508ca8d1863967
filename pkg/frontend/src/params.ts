/** Sampling controls, validated with the same ranges the server enforces. */

export interface SamplerParams {
  temperature: number;
  topK: number;
  topP: number;
  repeatDecay: number;
  beamWidth: number;
  beamProb: number;
  seed: number;
}

export const DEFAULT_PARAMS: SamplerParams = {
  temperature: 1.0,
  topK: 128,
  topP: 1.0,
  repeatDecay: 0.0,
  beamWidth: 1,
  beamProb: 0.0,
  seed: 0,
};

const MAX_SEED = 2 ** 64;

/**
 * Human-readable range hint when a value is out of range, null when valid.
 * Mirrors the server's field constraints exactly, so anything accepted here
 * is accepted there.
 */
export function validateParam(name: keyof SamplerParams, value: number): string | null {
  if (!Number.isFinite(value)) {
    return "must be a number";
  }
  switch (name) {
    case "temperature":
      return value > 0 ? null : "must be greater than 0";
    case "topK":
      return Number.isInteger(value) && value >= 1 && value <= 128
        ? null
        : "must be an integer in 1..128";
    case "topP":
      return value > 0 && value <= 1 ? null : "must lie in (0, 1]";
    case "repeatDecay":
      return value >= 0 && value < 1 ? null : "must lie in [0, 1)";
    case "beamWidth":
      return Number.isInteger(value) && value >= 1 ? null : "must be an integer of at least 1";
    case "beamProb":
      return value >= 0 && value <= 1 ? null : "must lie in [0, 1]";
    case "seed":
      return Number.isInteger(value) && value >= 0 && value < MAX_SEED
        ? null
        : "must be a non-negative integer below 2^64";
  }
}

/** Apply one edit, throwing a RangeError (with the hint) when it is invalid. */
export function withEdit(
  params: SamplerParams,
  name: keyof SamplerParams,
  value: number,
): SamplerParams {
  const hint = validateParam(name, value);
  if (hint !== null) {
    throw new RangeError(`${name} ${hint}`);
  }
  return { ...params, [name]: value };
}

/** The sampler object as the generate endpoint expects it, values verbatim. */
export interface WireSampler {
  temperature: number;
  top_k: number;
  top_p: number;
  repeat_decay: number;
  beam_width: number;
  beam_prob: number;
  hints: number[];
  seed: number;
}

export function toWireSampler(params: SamplerParams, hints: number[] = []): WireSampler {
  return {
    temperature: params.temperature,
    top_k: params.topK,
    top_p: params.topP,
    repeat_decay: params.repeatDecay,
    beam_width: params.beamWidth,
    beam_prob: params.beamProb,
    hints: [...hints],
    seed: params.seed,
  };
}
