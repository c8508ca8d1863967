import { describe, expect, it } from "vitest";

import {
  DEFAULT_PARAMS,
  toWireSampler,
  validateParam,
  withEdit,
  type SamplerParams,
} from "../src/params.js";

describe("validateParam", () => {
  it("accepts every default", () => {
    for (const name of Object.keys(DEFAULT_PARAMS) as Array<keyof SamplerParams>) {
      expect(validateParam(name, DEFAULT_PARAMS[name])).toBeNull();
    }
  });

  it("rejects temperature zero and below", () => {
    expect(validateParam("temperature", 0)).toContain("greater than 0");
    expect(validateParam("temperature", -0.5)).not.toBeNull();
    expect(validateParam("temperature", 0.001)).toBeNull();
    expect(validateParam("temperature", 4)).toBeNull();
  });

  it("keeps top-k an integer between 1 and 128", () => {
    expect(validateParam("topK", 0)).not.toBeNull();
    expect(validateParam("topK", 129)).not.toBeNull();
    expect(validateParam("topK", 2.5)).not.toBeNull();
    expect(validateParam("topK", 1)).toBeNull();
    expect(validateParam("topK", 128)).toBeNull();
  });

  it("keeps top-p in the half-open (0, 1]", () => {
    expect(validateParam("topP", 0)).not.toBeNull();
    expect(validateParam("topP", 1.0001)).not.toBeNull();
    expect(validateParam("topP", 1)).toBeNull();
    expect(validateParam("topP", 0.3)).toBeNull();
  });

  it("accepts repeat decay 0.99 but rejects exactly 1", () => {
    expect(validateParam("repeatDecay", 0.99)).toBeNull();
    expect(validateParam("repeatDecay", 1.0)).not.toBeNull();
    expect(validateParam("repeatDecay", -0.01)).not.toBeNull();
    expect(validateParam("repeatDecay", 0)).toBeNull();
  });

  it("wants a positive integer beam width", () => {
    expect(validateParam("beamWidth", 0)).not.toBeNull();
    expect(validateParam("beamWidth", 1.5)).not.toBeNull();
    expect(validateParam("beamWidth", 1)).toBeNull();
    expect(validateParam("beamWidth", 8)).toBeNull();
  });

  it("keeps beam probability in [0, 1] inclusive", () => {
    expect(validateParam("beamProb", -0.1)).not.toBeNull();
    expect(validateParam("beamProb", 1.1)).not.toBeNull();
    expect(validateParam("beamProb", 0)).toBeNull();
    expect(validateParam("beamProb", 1)).toBeNull();
  });

  it("bounds the seed to unsigned 64-bit integers", () => {
    expect(validateParam("seed", -1)).not.toBeNull();
    expect(validateParam("seed", 1.5)).not.toBeNull();
    expect(validateParam("seed", 2 ** 64)).not.toBeNull();
    expect(validateParam("seed", 0)).toBeNull();
    expect(validateParam("seed", 123456789)).toBeNull();
  });

  it("rejects NaN and infinities everywhere", () => {
    expect(validateParam("temperature", Number.NaN)).not.toBeNull();
    expect(validateParam("beamProb", Number.POSITIVE_INFINITY)).not.toBeNull();
  });
});

describe("withEdit", () => {
  it("returns a fresh object with the edit applied", () => {
    const edited = withEdit(DEFAULT_PARAMS, "temperature", 1.3);
    expect(edited.temperature).toBe(1.3);
    expect(DEFAULT_PARAMS.temperature).toBe(1.0);
    expect(edited).not.toBe(DEFAULT_PARAMS);
  });

  it("throws a RangeError naming the field and range", () => {
    expect(() => withEdit(DEFAULT_PARAMS, "temperature", 0)).toThrowError(RangeError);
    expect(() => withEdit(DEFAULT_PARAMS, "repeatDecay", 1)).toThrowError(/repeatDecay/);
  });
});

describe("toWireSampler", () => {
  it("copies every edited value verbatim into the wire shape", () => {
    let params = { ...DEFAULT_PARAMS };
    params = withEdit(params, "temperature", 0.85);
    params = withEdit(params, "topK", 17);
    params = withEdit(params, "topP", 0.925);
    params = withEdit(params, "repeatDecay", 0.375);
    params = withEdit(params, "beamWidth", 3);
    params = withEdit(params, "beamProb", 0.6);
    params = withEdit(params, "seed", 987654321);

    const wire = toWireSampler(params);
    expect(wire.temperature).toBe(0.85);
    expect(wire.top_k).toBe(17);
    expect(wire.top_p).toBe(0.925);
    expect(wire.repeat_decay).toBe(0.375);
    expect(wire.beam_width).toBe(3);
    expect(wire.beam_prob).toBe(0.6);
    expect(wire.seed).toBe(987654321);
    expect(wire.hints).toEqual([]);
  });

  it("copies hints without sharing the array", () => {
    const hints = [60, 62];
    const wire = toWireSampler(DEFAULT_PARAMS, hints);
    expect(wire.hints).toEqual([60, 62]);
    hints.push(64);
    expect(wire.hints).toEqual([60, 62]);
  });
});
