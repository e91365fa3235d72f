/**
 * Acoustic encoders. Every encoder exposes 12 layers of 768-wide hidden
 * states (validated after load); the exporter stacks them per segment.
 *
 * The pretrained adapters load lazily through @huggingface/transformers so
 * the exporter works (stub encoder, format tooling, planning) without the
 * heavyweight runtime installed.
 */

import { roundHalfUp } from "./segmenter.js";

export interface EncoderOutput {
  /** One Float32Array per layer, row-major (frames, width). */
  layers: Float32Array[];
  frames: number;
}

export interface Encoder {
  readonly name: string;
  readonly layerCount: number;
  readonly width: number;
  readonly sampleRateHz: number;
  readonly framesPerSecond: number;
  /** Encode one zero-padded segment of nominalLenS seconds. */
  encode(segment: Float32Array, nominalLenS: number): Promise<EncoderOutput>;
}

export const REQUIRED_LAYERS = 12;
export const REQUIRED_WIDTH = 768;

export function validateEncoder(enc: Encoder): void {
  if (enc.layerCount !== REQUIRED_LAYERS || enc.width !== REQUIRED_WIDTH) {
    throw new Error(
      `encoder ${enc.name} exposes ${enc.layerCount} layers x ${enc.width} ` +
      `features; need ${REQUIRED_LAYERS} x ${REQUIRED_WIDTH}`,
    );
  }
}

/**
 * Deterministic offline encoder for pipeline tests: same dimensions as the
 * base pretrained models (12 x 768, ~50 frames/s at 16 kHz) with values
 * that depend smoothly on the audio content of each frame's span.
 */
export class StubEncoder implements Encoder {
  readonly name = "stub-768";
  readonly layerCount = REQUIRED_LAYERS;
  readonly width = REQUIRED_WIDTH;
  readonly sampleRateHz = 16_000;
  readonly framesPerSecond = 50;

  async encode(segment: Float32Array, nominalLenS: number): Promise<EncoderOutput> {
    const frames = Math.max(1, roundHalfUp(nominalLenS * this.framesPerSecond));
    const span = Math.max(1, Math.floor(segment.length / frames));
    const energies = new Float64Array(frames);
    for (let t = 0; t < frames; t++) {
      let acc = 0;
      const start = t * span;
      const end = Math.min(segment.length, start + span);
      for (let i = start; i < end; i++) {
        acc += Math.abs(segment[i]);
      }
      energies[t] = end > start ? acc / (end - start) : 0;
    }
    const layers: Float32Array[] = [];
    for (let l = 0; l < this.layerCount; l++) {
      const out = new Float32Array(frames * this.width);
      for (let t = 0; t < frames; t++) {
        const base = energies[t] * (1 + l * 0.25);
        for (let f = 0; f < this.width; f++) {
          out[t * this.width + f] = Math.fround(
            Math.sin(base * 7.0 + l * 0.7 + t * 0.31 + f * 0.013),
          );
        }
      }
      layers.push(out);
    }
    return { layers, frames };
  }
}

interface PretrainedSpec {
  modelId: string;
  sampleRateHz: number;
  framesPerSecond: number;
  /** Whisper's encoder always sees a fixed 30 s window. */
  fixedWindowS?: number;
}

const PRETRAINED: Record<string, PretrainedSpec> = {
  "wav2vec2-base": {
    modelId: "Xenova/wav2vec2-base-960h",
    sampleRateHz: 16_000,
    framesPerSecond: 50,
  },
  "hubert-base": {
    modelId: "Xenova/hubert-base-ls960",
    sampleRateHz: 16_000,
    framesPerSecond: 50,
  },
  "whisper-small": {
    modelId: "Xenova/whisper-small",
    sampleRateHz: 16_000,
    framesPerSecond: 50,
    fixedWindowS: 30,
  },
};

/**
 * Hidden-state exporter backed by @huggingface/transformers. Requires the
 * package to be installed and the model weights obtainable; the loaded
 * model must expose per-layer hidden states (12 x 768 for the base sizes).
 */
export class PretrainedEncoder implements Encoder {
  readonly layerCount = REQUIRED_LAYERS;
  readonly width = REQUIRED_WIDTH;
  readonly sampleRateHz: number;
  readonly framesPerSecond: number;
  private readonly spec: PretrainedSpec;
  private model: any = null;
  private processor: any = null;

  constructor(readonly name: string) {
    const spec = PRETRAINED[name];
    if (!spec) {
      throw new Error(
        `unknown encoder ${name}; available: ${Object.keys(PRETRAINED).join(", ")}, stub-768`,
      );
    }
    this.spec = spec;
    this.sampleRateHz = spec.sampleRateHz;
    this.framesPerSecond = spec.framesPerSecond;
  }

  private async load(): Promise<void> {
    if (this.model) {
      return;
    }
    let transformers: any;
    try {
      // optional peer dependency; variable specifier keeps its types optional
      const moduleId = "@huggingface/transformers";
      transformers = await import(moduleId);
    } catch (e) {
      throw new Error(
        "pretrained encoders need the optional dependency " +
        "@huggingface/transformers (npm install @huggingface/transformers); " +
        `import failed: ${(e as Error).message}`,
      );
    }
    this.processor = await transformers.AutoProcessor.from_pretrained(this.spec.modelId);
    this.model = await transformers.AutoModel.from_pretrained(this.spec.modelId, {
      output_hidden_states: true,
    });
  }

  async encode(segment: Float32Array, nominalLenS: number): Promise<EncoderOutput> {
    await this.load();
    let input = segment;
    if (this.spec.fixedWindowS) {
      const want = this.spec.fixedWindowS * this.sampleRateHz;
      const padded = new Float32Array(want);
      padded.set(segment.subarray(0, Math.min(segment.length, want)));
      input = padded;
    }
    const features = await this.processor(input, {
      sampling_rate: this.sampleRateHz,
    });
    const output = await this.model(features);
    const states = output.hidden_states ?? output.encoder_hidden_states;
    if (!states) {
      throw new Error(
        `${this.name}: model output carries no per-layer hidden states; ` +
        "the ONNX export of this checkpoint does not expose them",
      );
    }
    // states[0] is the pre-transformer embedding; layers 1..12 follow
    const all = Array.from(states).slice(1) as any[];
    if (all.length !== this.layerCount) {
      throw new Error(
        `${this.name}: expected ${this.layerCount} transformer layers, got ${all.length}`,
      );
    }
    const wantFrames = Math.max(1, roundHalfUp(nominalLenS * this.framesPerSecond));
    const layers = all.map((t) => {
      const [, frames, width] = t.dims as number[];
      if (width !== this.width) {
        throw new Error(`${this.name}: hidden width ${width}, need ${this.width}`);
      }
      const take = Math.min(frames, wantFrames);
      const out = new Float32Array(wantFrames * this.width);
      out.set((t.data as Float32Array).subarray(0, take * this.width));
      return out;
    });
    return { layers, frames: wantFrames };
  }
}

export function makeEncoder(name: string): Encoder {
  const encoder = name === "stub-768" ? new StubEncoder() : new PretrainedEncoder(name);
  validateEncoder(encoder);
  return encoder;
}
