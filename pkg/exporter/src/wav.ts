/** Minimal RIFF/WAVE reader: mono 16-bit PCM or 32-bit float. */

export interface WavData {
  samples: Float32Array;
  rateHz: number;
}

export function decodeWav(buf: Uint8Array): WavData {
  const text = (off: number, len: number) =>
    new TextDecoder().decode(buf.subarray(off, off + len));
  if (buf.length < 44 || text(0, 4) !== "RIFF" || text(8, 4) !== "WAVE") {
    throw new RangeError("not a RIFF/WAVE file");
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  let pos = 12;
  let fmt: { format: number; channels: number; rate: number; bits: number } | null = null;
  let data: Uint8Array | null = null;
  while (pos + 8 <= buf.length) {
    const id = text(pos, 4);
    const size = view.getUint32(pos + 4, true);
    if (id === "fmt ") {
      fmt = {
        format: view.getUint16(pos + 8, true),
        channels: view.getUint16(pos + 10, true),
        rate: view.getUint32(pos + 12, true),
        bits: view.getUint16(pos + 22, true),
      };
    } else if (id === "data") {
      data = buf.subarray(pos + 8, pos + 8 + size);
    }
    pos += 8 + size + (size & 1);
  }
  if (!fmt || !data) {
    throw new RangeError("missing fmt or data chunk");
  }
  if (fmt.channels !== 1) {
    throw new RangeError(`expected mono audio, got ${fmt.channels} channels`);
  }
  const dview = new DataView(data.buffer, data.byteOffset, data.byteLength);
  if (fmt.format === 1 && fmt.bits === 16) {
    const n = Math.floor(data.length / 2);
    const samples = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      samples[i] = dview.getInt16(2 * i, true) / 32768;
    }
    return { samples, rateHz: fmt.rate };
  }
  if (fmt.format === 3 && fmt.bits === 32) {
    const n = Math.floor(data.length / 4);
    const samples = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      samples[i] = dview.getFloat32(4 * i, true);
    }
    return { samples, rateHz: fmt.rate };
  }
  throw new RangeError(
    `unsupported format (code ${fmt.format}, ${fmt.bits}-bit); need 16-bit PCM or 32-bit float`,
  );
}

/** Encode mono float samples as 16-bit PCM (test helper and fixtures). */
export function encodeWavPcm16(samples: Float32Array, rateHz: number): Uint8Array {
  const data = new Uint8Array(samples.length * 2);
  const dview = new DataView(data.buffer);
  for (let i = 0; i < samples.length; i++) {
    const clipped = Math.max(-1, Math.min(1, samples[i]));
    dview.setInt16(2 * i, Math.round(clipped * 32767), true);
  }
  const out = new Uint8Array(44 + data.length);
  const view = new DataView(out.buffer);
  out.set(new TextEncoder().encode("RIFF"), 0);
  view.setUint32(4, 36 + data.length, true);
  out.set(new TextEncoder().encode("WAVE"), 8);
  out.set(new TextEncoder().encode("fmt "), 12);
  view.setUint32(16, 16, true);
  view.setUint16(20, 1, true);
  view.setUint16(22, 1, true);
  view.setUint32(24, rateHz, true);
  view.setUint32(28, rateHz * 2, true);
  view.setUint16(32, 2, true);
  view.setUint16(34, 16, true);
  out.set(new TextEncoder().encode("data"), 36);
  view.setUint32(40, data.length, true);
  out.set(data, 44);
  return out;
}
