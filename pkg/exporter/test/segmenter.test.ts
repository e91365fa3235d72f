import { describe, expect, it } from "vitest";

import { planSegments, sliceSegment } from "../src/segmenter.js";

describe("planSegments", () => {
  it("matches the golden 25s / 10s / 0.10 plan", () => {
    const specs = planSegments(25, 10, 0.1);
    expect(specs.map((s) => [s.startS, s.endS, s.padS])).toEqual([
      [0, 10, 0],
      [9, 19, 0],
      [18, 25, 3],
    ]);
  });

  it("emits a single padded segment for short recordings", () => {
    const specs = planSegments(5, 10, 0.1);
    expect(specs).toHaveLength(1);
    expect(specs[0]).toMatchObject({ startS: 0, endS: 5, padS: 5 });
  });

  it("emits one unpadded segment for an exact fit", () => {
    const specs = planSegments(10, 10, 0.1);
    expect(specs).toEqual([
      { index: 0, startS: 0, endS: 10, padS: 0, nominalLenS: 10 },
    ]);
  });

  it("covers the recording without gaps on random inputs", () => {
    let state = 12345;
    const rand = () => {
      state = (state * 1103515245 + 12345) % 2147483648;
      return state / 2147483648;
    };
    for (let trial = 0; trial < 200; trial++) {
      const total = 0.3 + rand() * 200;
      const seg = 0.5 + rand() * 30;
      const overlap = rand() * 0.49;
      const specs = planSegments(total, seg, overlap);
      expect(specs[0].startS).toBe(0);
      expect(specs[specs.length - 1].endS).toBeCloseTo(total, 9);
      for (let i = 1; i < specs.length; i++) {
        expect(specs[i].startS).toBeLessThanOrEqual(specs[i - 1].endS + 1e-9);
      }
      for (const [i, s] of specs.entries()) {
        expect(s.endS - s.startS + s.padS).toBeCloseTo(seg, 9);
        if (s.padS > 0) {
          expect(i).toBe(specs.length - 1);
        }
      }
    }
  });

  it("rejects out-of-range arguments", () => {
    expect(() => planSegments(0, 10)).toThrow(/totalLenS/);
    expect(() => planSegments(10, 0)).toThrow(/segLenS/);
    expect(() => planSegments(10, 5, 0.5)).toThrow(/overlapFrac/);
  });
});

describe("sliceSegment", () => {
  it("pads the tail segment with zeros at 16 kHz", () => {
    const samples = new Float32Array(16_000 * 25).fill(1);
    const spec = { index: 2, startS: 18, endS: 25, padS: 3, nominalLenS: 10 };
    const { samples: out, validSamples } = sliceSegment(samples, 16_000, spec);
    expect(out).toHaveLength(160_000);
    expect(validSamples).toBe(112_000);
    expect(out[111_999]).toBe(1);
    expect(out[112_000]).toBe(0);
    expect(out[159_999]).toBe(0);
  });

  it("rejects segments outside the recording", () => {
    const spec = { index: 0, startS: 0, endS: 2, padS: 8, nominalLenS: 10 };
    expect(() => sliceSegment(new Float32Array(8000), 16_000, spec)).toThrow(/outside/);
  });
});
