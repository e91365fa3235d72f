/**
 * DSTC feature-file codec: one recording's layer-stacked embeddings as a
 * little-endian binary blob, bit-conformant with the consumer pipeline.
 *
 * Layout: magic "DSTC", version u8 = 1, label i8 (-1 = absent), u32 L/N/T/F,
 * u16 id length + UTF-8 id, N x u32 valid frame counts, then L*N*T*F
 * float32 values row-major in (layer, segment, frame, feature) order.
 */

const MAGIC = "DSTC";
const VERSION = 1;

export interface FeatureFile {
  /** Row-major (L, N, T, F). */
  values: Float32Array;
  layers: number;
  segments: number;
  frames: number;
  features: number;
  validFrames: number[];
  recordingId: string;
  label: number | null;
}

export function encodeFeatures(f: FeatureFile): Uint8Array {
  const { layers: L, segments: N, frames: T, features: F } = f;
  if (L < 1 || N < 1 || T < 1 || F < 1) {
    throw new RangeError(`all extents must be positive, got (${L}, ${N}, ${T}, ${F})`);
  }
  if (f.values.length !== L * N * T * F) {
    throw new RangeError(
      `values length ${f.values.length} != L*N*T*F = ${L * N * T * F}`,
    );
  }
  if (f.validFrames.length !== N) {
    throw new RangeError(`validFrames needs ${N} entries, got ${f.validFrames.length}`);
  }
  for (const v of f.validFrames) {
    if (!(v >= 1 && v <= T)) {
      throw new RangeError(`validFrames entry ${v} outside [1, ${T}]`);
    }
  }
  for (const v of f.values) {
    if (!Number.isFinite(v)) {
      throw new RangeError("feature values must be finite");
    }
  }
  const id = new TextEncoder().encode(f.recordingId);
  if (id.length > 0xffff) {
    throw new RangeError("recording id longer than 65535 bytes");
  }
  const headerLen = 4 + 1 + 1 + 16 + 2 + id.length + 4 * N;
  const buf = new Uint8Array(headerLen + 4 * f.values.length);
  const view = new DataView(buf.buffer);
  buf.set(new TextEncoder().encode(MAGIC), 0);
  view.setUint8(4, VERSION);
  view.setInt8(5, f.label === null ? -1 : f.label);
  view.setUint32(6, L, true);
  view.setUint32(10, N, true);
  view.setUint32(14, T, true);
  view.setUint32(18, F, true);
  view.setUint16(22, id.length, true);
  buf.set(id, 24);
  let pos = 24 + id.length;
  for (const v of f.validFrames) {
    view.setUint32(pos, v, true);
    pos += 4;
  }
  for (let i = 0; i < f.values.length; i++) {
    view.setFloat32(pos + 4 * i, f.values[i], true);
  }
  return buf;
}

export function decodeFeatures(buf: Uint8Array): FeatureFile {
  const need = (n: number, what: string) => {
    if (buf.length < n) {
      throw new RangeError(`truncated in ${what}: expected >= ${n} bytes, have ${buf.length}`);
    }
  };
  need(6, "header");
  if (new TextDecoder().decode(buf.subarray(0, 4)) !== MAGIC) {
    throw new RangeError(`bad magic, expected "${MAGIC}"`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (view.getUint8(4) !== VERSION) {
    throw new RangeError(`unsupported version ${view.getUint8(4)}`);
  }
  const labelByte = view.getInt8(5);
  need(24, "dimension header");
  const L = view.getUint32(6, true);
  const N = view.getUint32(10, true);
  const T = view.getUint32(14, true);
  const F = view.getUint32(18, true);
  const idLen = view.getUint16(22, true);
  need(24 + idLen + 4 * N, "id and validFrames");
  const recordingId = new TextDecoder().decode(buf.subarray(24, 24 + idLen));
  let pos = 24 + idLen;
  const validFrames: number[] = [];
  for (let i = 0; i < N; i++) {
    validFrames.push(view.getUint32(pos, true));
    pos += 4;
  }
  const count = L * N * T * F;
  if (buf.length !== pos + 4 * count) {
    throw new RangeError(
      `payload length mismatch: expected ${pos + 4 * count} bytes, have ${buf.length}`,
    );
  }
  const values = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    values[i] = view.getFloat32(pos + 4 * i, true);
  }
  return {
    values,
    layers: L,
    segments: N,
    frames: T,
    features: F,
    validFrames,
    recordingId,
    label: labelByte < 0 ? null : labelByte,
  };
}
