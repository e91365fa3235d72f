/**
 * Fixed-length segmentation with partial overlap, matching the consumer
 * pipeline's arithmetic exactly (shared golden test vectors keep the two
 * implementations honest). All times in seconds.
 */

export interface SegmentSpec {
  index: number;
  startS: number;
  endS: number;
  padS: number;
  nominalLenS: number;
}

export function planSegments(
  totalLenS: number,
  segLenS: number,
  overlapFrac = 0.10,
): SegmentSpec[] {
  if (!(totalLenS > 0)) {
    throw new RangeError(`totalLenS must be > 0, got ${totalLenS}`);
  }
  if (!(segLenS > 0)) {
    throw new RangeError(`segLenS must be > 0, got ${segLenS}`);
  }
  if (!(overlapFrac >= 0 && overlapFrac < 0.5)) {
    throw new RangeError(`overlapFrac must be in [0, 0.5), got ${overlapFrac}`);
  }
  const hop = segLenS * (1 - overlapFrac);
  const specs: SegmentSpec[] = [];
  for (let i = 0; ; i++) {
    const start = i * hop;
    if (start + segLenS >= totalLenS) {
      const end = Math.min(start + segLenS, totalLenS);
      specs.push({
        index: i,
        startS: start,
        endS: end,
        padS: segLenS - (end - start),
        nominalLenS: segLenS,
      });
      return specs;
    }
    specs.push({ index: i, startS: start, endS: start + segLenS, padS: 0, nominalLenS: segLenS });
  }
}

/** Round half up, the same convention the consumer uses for boundaries. */
export function roundHalfUp(x: number): number {
  return Math.floor(x + 0.5);
}

/**
 * Cut one planned segment out of a sample vector, zero-padding the tail to
 * exactly nominalLenS * rateHz samples. Returns the padded samples and the
 * count of real (non-padding) samples.
 */
export function sliceSegment(
  samples: Float32Array,
  rateHz: number,
  spec: SegmentSpec,
): { samples: Float32Array; validSamples: number } {
  const totalS = samples.length / rateHz;
  if (spec.startS < 0 || spec.endS > totalS + 0.5 / rateHz) {
    throw new RangeError(
      `segment [${spec.startS}, ${spec.endS}]s outside recording of ${totalS}s`,
    );
  }
  const outLen = roundHalfUp(spec.nominalLenS * rateHz);
  const start = roundHalfUp(spec.startS * rateHz);
  let valid = roundHalfUp((spec.endS - spec.startS) * rateHz);
  valid = Math.min(valid, samples.length - start, outLen);
  const out = new Float32Array(outLen);
  out.set(samples.subarray(start, start + valid));
  return { samples: out, validSamples: valid };
}
