/** Sentence encoders behind one interface.
 *
 * The default model id points at the multilingual distilled sentence
 * transformer and is served through transformers.js when that package (and
 * its model download) is available. `hash-v1` is a fully offline,
 * deterministic fallback: signed character-n-gram hashing into a fixed
 * number of buckets, L2-normalized. It preserves the contract the pipeline
 * needs (identical text -> identical unit vector, similar text -> nearby
 * vector) without any model files.
 */

export const DEFAULT_MODEL = "distiluse-base-multilingual-cased-v2";
export const HASH_MODEL = "hash-v1";
export const HASH_DIMENSION = 256;

export class ModelLoadFailure extends Error {}

export interface Encoder {
  readonly modelId: string;
  readonly dimension: number;
  encode(texts: string[]): Promise<number[][]>;
}

/* FNV-1a, 32 bit. */
function fnv1a(text: string, seed: number): number {
  let hash = (0x811c9dc5 ^ seed) >>> 0;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash;
}

export class HashEncoder implements Encoder {
  readonly modelId: string;
  readonly dimension: number;

  constructor(dimension: number = HASH_DIMENSION) {
    this.dimension = dimension;
    this.modelId = dimension === HASH_DIMENSION ? HASH_MODEL : `${HASH_MODEL}/${dimension}`;
  }

  private features(text: string): string[] {
    const padded = ` ${text.toLowerCase()} `;
    const grams: string[] = [];
    for (const n of [3, 4]) {
      for (let i = 0; i + n <= padded.length; i++) {
        grams.push(padded.slice(i, i + n));
      }
    }
    for (const word of padded.split(/\s+/)) {
      if (word) grams.push(`w:${word}`);
    }
    return grams;
  }

  encodeOne(text: string): number[] {
    const vector = new Array<number>(this.dimension).fill(0);
    for (const gram of this.features(text)) {
      const bucket = fnv1a(gram, 0) % this.dimension;
      const sign = fnv1a(gram, 0x9e3779b9) & 1 ? 1 : -1;
      vector[bucket] += sign;
    }
    const norm = Math.sqrt(vector.reduce((acc, x) => acc + x * x, 0));
    return norm > 0 ? vector.map((x) => x / norm) : vector;
  }

  async encode(texts: string[]): Promise<number[][]> {
    return texts.map((t) => this.encodeOne(t));
  }
}

/** transformers.js wrapper: mean pooling, normalized output. */
class TransformersEncoder implements Encoder {
  readonly modelId: string;
  readonly dimension: number;
  private extractor: any;

  constructor(modelId: string, extractor: any, dimension: number) {
    this.modelId = modelId;
    this.extractor = extractor;
    this.dimension = dimension;
  }

  async encode(texts: string[]): Promise<number[][]> {
    const output = await this.extractor(texts, { pooling: "mean", normalize: true });
    const [rows, cols] = output.dims.slice(-2);
    const flat: Float32Array = output.data;
    const vectors: number[][] = [];
    for (let r = 0; r < rows; r++) {
      vectors.push(Array.from(flat.subarray(r * cols, (r + 1) * cols)));
    }
    return vectors;
  }
}

async function loadTransformersEncoder(modelId: string): Promise<Encoder> {
  let pipeline: any;
  try {
    ({ pipeline } = await import("@xenova/transformers"));
  } catch (err) {
    throw new ModelLoadFailure(
      `model ${modelId} needs the optional @xenova/transformers package ` +
      `(npm install @xenova/transformers), or use --model ${HASH_MODEL} ` +
      `for the offline encoder. Import failed: ${err}`);
  }
  // sentence-transformers checkpoints are published under the Xenova/ scope
  const hubId = modelId.includes("/") ? modelId : `Xenova/${modelId}`;
  let extractor: any;
  try {
    extractor = await pipeline("feature-extraction", hubId);
  } catch (err) {
    throw new ModelLoadFailure(`cannot load ${hubId}: ${err}`);
  }
  const probe = await extractor("dimension probe", { pooling: "mean", normalize: true });
  const dimension = probe.dims[probe.dims.length - 1];
  return new TransformersEncoder(modelId, extractor, dimension);
}

export async function makeEncoder(modelId: string): Promise<Encoder> {
  if (modelId === HASH_MODEL || modelId.startsWith(`${HASH_MODEL}/`)) {
    const parts = modelId.split("/");
    const dimension = parts.length > 1 ? Number(parts[1]) : HASH_DIMENSION;
    if (!Number.isInteger(dimension) || dimension < 8) {
      throw new ModelLoadFailure(`bad hash encoder dimension in ${modelId}`);
    }
    return new HashEncoder(dimension);
  }
  return loadTransformersEncoder(modelId);
}
