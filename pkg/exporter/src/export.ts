/**
 * The export job: plan segments, run the encoder per segment, stack all 12
 * layers into one feature file per recording, and emit a manifest with the
 * same schema the consumer pipeline reads.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { basename, dirname, join, resolve } from "node:path";

import { encodeFeatures } from "./dstc.js";
import { Encoder, makeEncoder } from "./encoders.js";
import { planSegments, roundHalfUp, sliceSegment } from "./segmenter.js";
import { decodeWav } from "./wav.js";

export interface InputRecording {
  path: string;
  label?: number | null;
  recording_id?: string;
}

export interface ManifestEntry {
  recording_id: string;
  path: string;
  label: number | null;
  duration_s: number;
  seg_len_s: number;
  overlap_frac: number;
  encoder_name: string;
  encoder_width: number;
}

export interface ExportJob {
  encoderName: string;
  inputManifestPath: string;
  segLenS: number;
  overlapFrac: number;
  outDir: string;
}

export function readInputManifest(path: string): InputRecording[] {
  const rows = JSON.parse(readFileSync(path, "utf-8"));
  if (!Array.isArray(rows)) {
    throw new Error(`${path}: input manifest must be a JSON array`);
  }
  for (const row of rows) {
    if (typeof row.path !== "string") {
      throw new Error(`${path}: every entry needs a "path" string`);
    }
  }
  return rows as InputRecording[];
}

export async function exportRecording(
  encoder: Encoder,
  wavPath: string,
  recordingId: string,
  label: number | null,
  segLenS: number,
  overlapFrac: number,
): Promise<{ bytes: Uint8Array; durationS: number }> {
  const { samples, rateHz } = decodeWav(new Uint8Array(readFileSync(wavPath)));
  if (rateHz !== encoder.sampleRateHz) {
    throw new Error(
      `${wavPath}: sample rate ${rateHz} Hz; ${encoder.name} expects ` +
      `${encoder.sampleRateHz} Hz (resample before export)`,
    );
  }
  const durationS = samples.length / rateHz;
  const specs = planSegments(durationS, segLenS, overlapFrac);

  const perSegment: Float32Array[][] = [];
  const validFrames: number[] = [];
  let frames = -1;
  for (const spec of specs) {
    const { samples: padded } = sliceSegment(samples, rateHz, spec);
    const out = await encoder.encode(padded, spec.nominalLenS);
    if (frames === -1) {
      frames = out.frames;
    } else if (frames !== out.frames) {
      throw new Error(
        `${wavPath}: encoder frame count changed between segments ` +
        `(${frames} vs ${out.frames})`,
      );
    }
    perSegment.push(out.layers);
    const valid = roundHalfUp((spec.endS - spec.startS) * encoder.framesPerSecond);
    validFrames.push(Math.min(Math.max(valid, 1), frames));
  }

  const L = encoder.layerCount;
  const N = specs.length;
  const F = encoder.width;
  const values = new Float32Array(L * N * frames * F);
  for (let l = 0; l < L; l++) {
    for (let n = 0; n < N; n++) {
      values.set(perSegment[n][l], (l * N + n) * frames * F);
    }
  }
  const bytes = encodeFeatures({
    values,
    layers: L,
    segments: N,
    frames,
    features: F,
    validFrames,
    recordingId,
    label,
  });
  return { bytes, durationS };
}

export async function runExport(job: ExportJob): Promise<ManifestEntry[]> {
  const encoder = makeEncoder(job.encoderName);
  const inputs = readInputManifest(job.inputManifestPath);
  const inputRoot = dirname(resolve(job.inputManifestPath));
  mkdirSync(job.outDir, { recursive: true });

  const entries: ManifestEntry[] = [];
  const seen = new Set<string>();
  for (const input of inputs) {
    const recordingId =
      input.recording_id ?? basename(input.path).replace(/\.wav$/i, "");
    if (seen.has(recordingId)) {
      throw new Error(`duplicate recording id ${recordingId}`);
    }
    seen.add(recordingId);
    const wavPath = resolve(inputRoot, input.path);
    const label = input.label ?? null;
    const { bytes, durationS } = await exportRecording(
      encoder, wavPath, recordingId, label, job.segLenS, job.overlapFrac);
    const fileName = `${recordingId}.dstc`;
    writeFileSync(join(job.outDir, fileName), bytes);
    entries.push({
      recording_id: recordingId,
      path: fileName,
      label,
      duration_s: Number(durationS.toFixed(6)),
      seg_len_s: job.segLenS,
      overlap_frac: job.overlapFrac,
      encoder_name: encoder.name,
      encoder_width: encoder.width,
    });
  }
  writeFileSync(
    join(job.outDir, "manifest.json"),
    JSON.stringify(entries, Object.keys(entries[0] ?? {}).sort(), 2) + "\n",
  );
  return entries;
}
