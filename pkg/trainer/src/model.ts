/**
 * Tiny character-level language model with low-rank adapters.
 *
 * The base network is a fixed-window MLP: the last `contextSize` character
 * embeddings are concatenated, pushed through one tanh layer, and projected
 * to next-character logits. Base weights are frozen and fully determined by
 * a seed, so an adapter file plus the base identifier reproduces the whole
 * model. Training touches only the low-rank factors added to the two dense
 * matrices.
 */

import { Rng, seedFromString } from "./rng.js";
import { BOS_ID, GENERATABLE_IDS, VOCAB_SIZE, decodeId, encodeChar } from "./vocab.js";
import { ConfigError } from "./errors.js";

export interface Matrix {
  rows: number;
  cols: number;
  data: Float64Array;
}

export function zeros(rows: number, cols: number): Matrix {
  return { rows, cols, data: new Float64Array(rows * cols) };
}

export function gaussianMatrix(rows: number, cols: number, std: number, rng: Rng): Matrix {
  const m = zeros(rows, cols);
  for (let i = 0; i < m.data.length; i++) m.data[i] = rng.gaussian() * std;
  return m;
}

// ---------------------------------------------------------------------------
// base network

export interface BaseSpec {
  id: string;
  contextSize: number;
  embedDim: number;
  hiddenDim: number;
  seed: number;
}

export function makeBaseSpec(contextSize: number, embedDim: number, hiddenDim: number, seed: number): BaseSpec {
  return {
    id: `char-mlp-c${contextSize}d${embedDim}h${hiddenDim}s${seed}`,
    contextSize,
    embedDim,
    hiddenDim,
    seed,
  };
}

/** Stock base for tests and toy runs: ~16k frozen parameters. */
export const TINY_BASE: BaseSpec = makeBaseSpec(16, 12, 48, 7);

const BASE_ID_PATTERN = /^char-mlp-c(\d+)d(\d+)h(\d+)s(\d+)$/;

export function baseSpecFromId(id: string): BaseSpec {
  const match = BASE_ID_PATTERN.exec(id);
  if (!match) {
    throw new ConfigError(`unknown base model identifier: ${id}`);
  }
  return makeBaseSpec(Number(match[1]), Number(match[2]), Number(match[3]), Number(match[4]));
}

export interface BaseWeights {
  spec: BaseSpec;
  embed: Matrix; // vocab x embedDim
  w1: Matrix; // (contextSize*embedDim) x hiddenDim
  b1: Float64Array;
  w2: Matrix; // hiddenDim x vocab
  b2: Float64Array;
}

/** Materialize the frozen base deterministically from its seed. */
export function buildBase(spec: BaseSpec): BaseWeights {
  const rng = new Rng(spec.seed ^ 0x5f3759df);
  const inputDim = spec.contextSize * spec.embedDim;
  return {
    spec,
    embed: gaussianMatrix(VOCAB_SIZE, spec.embedDim, 0.6, rng),
    w1: gaussianMatrix(inputDim, spec.hiddenDim, 1 / Math.sqrt(inputDim), rng),
    b1: new Float64Array(spec.hiddenDim),
    w2: gaussianMatrix(spec.hiddenDim, VOCAB_SIZE, 1 / Math.sqrt(spec.hiddenDim), rng),
    b2: new Float64Array(VOCAB_SIZE),
  };
}

// ---------------------------------------------------------------------------
// low-rank adapter

export interface LoraPair {
  down: Matrix; // in x rank, gaussian init
  up: Matrix; // rank x out, zero init so the delta starts at zero
}

export interface LoraDelta {
  rank: number;
  alpha: number;
  w1: LoraPair;
  w2: LoraPair;
}

/** Requested ranks above the smallest matrix dimension are silently capped. */
export function effectiveRank(spec: BaseSpec, requested: number): number {
  const inputDim = spec.contextSize * spec.embedDim;
  return Math.max(1, Math.min(requested, inputDim, spec.hiddenDim, VOCAB_SIZE));
}

export function initLora(spec: BaseSpec, rank: number, alpha: number, seed: number): LoraDelta {
  const r = effectiveRank(spec, rank);
  const rng = new Rng(seed ^ 0x9e3779b9);
  const inputDim = spec.contextSize * spec.embedDim;
  return {
    rank: r,
    alpha,
    w1: { down: gaussianMatrix(inputDim, r, 0.1, rng), up: zeros(r, spec.hiddenDim) },
    w2: { down: gaussianMatrix(spec.hiddenDim, r, 0.1, rng), up: zeros(r, VOCAB_SIZE) },
  };
}

export function cloneLora(delta: LoraDelta): LoraDelta {
  const copyMatrix = (m: Matrix): Matrix => ({ rows: m.rows, cols: m.cols, data: m.data.slice() });
  return {
    rank: delta.rank,
    alpha: delta.alpha,
    w1: { down: copyMatrix(delta.w1.down), up: copyMatrix(delta.w1.up) },
    w2: { down: copyMatrix(delta.w2.down), up: copyMatrix(delta.w2.up) },
  };
}

// ---------------------------------------------------------------------------
// forward / backward kernels

/** Reusable per-position activations; allocate once per run. */
export interface ForwardCache {
  x: Float64Array; // concatenated embeddings
  xl: Float64Array; // adapter-path input after dropout
  u1: Float64Array; // xl . down1
  h: Float64Array; // tanh hidden
  hl: Float64Array; // adapter-path hidden after dropout
  u2: Float64Array; // hl . down2
  logits: Float64Array;
  probs: Float64Array;
}

export function allocCache(spec: BaseSpec, rank: number): ForwardCache {
  const inputDim = spec.contextSize * spec.embedDim;
  return {
    x: new Float64Array(inputDim),
    xl: new Float64Array(inputDim),
    u1: new Float64Array(rank),
    h: new Float64Array(spec.hiddenDim),
    hl: new Float64Array(spec.hiddenDim),
    u2: new Float64Array(rank),
    logits: new Float64Array(VOCAB_SIZE),
    probs: new Float64Array(VOCAB_SIZE),
  };
}

/**
 * One position forward. `maskX`/`maskH` are dropout masks over the adapter
 * path only (entries 0 or 1/(1-p)); pass null outside training.
 */
export function forwardPos(
  base: BaseWeights,
  lora: LoraDelta | null,
  window: Int32Array,
  cache: ForwardCache,
  maskX: Float64Array | null = null,
  maskH: Float64Array | null = null,
): void {
  const { spec } = base;
  const d = spec.embedDim;
  const H = spec.hiddenDim;
  const IN = spec.contextSize * d;
  const { x, xl, u1, h, hl, u2, logits } = cache;

  for (let c = 0; c < spec.contextSize; c++) {
    const row = window[c] * d;
    for (let j = 0; j < d; j++) x[c * d + j] = base.embed.data[row + j];
  }

  const r = lora ? lora.rank : 0;
  const scale = lora ? lora.alpha / lora.rank : 0;
  if (lora) {
    if (maskX) {
      for (let i = 0; i < IN; i++) xl[i] = x[i] * maskX[i];
    } else {
      xl.set(x);
    }
    u1.fill(0);
    const down1 = lora.w1.down.data;
    for (let i = 0; i < IN; i++) {
      const xi = xl[i];
      if (xi === 0) continue;
      const rowOff = i * r;
      for (let k = 0; k < r; k++) u1[k] += xi * down1[rowOff + k];
    }
  }

  const w1 = base.w1.data;
  for (let j = 0; j < H; j++) h[j] = base.b1[j];
  for (let i = 0; i < IN; i++) {
    const xi = x[i];
    if (xi === 0) continue;
    const rowOff = i * H;
    for (let j = 0; j < H; j++) h[j] += xi * w1[rowOff + j];
  }
  if (lora) {
    const up1 = lora.w1.up.data;
    for (let k = 0; k < r; k++) {
      const uk = u1[k] * scale;
      if (uk === 0) continue;
      const rowOff = k * H;
      for (let j = 0; j < H; j++) h[j] += uk * up1[rowOff + j];
    }
  }
  for (let j = 0; j < H; j++) h[j] = Math.tanh(h[j]);

  if (lora) {
    if (maskH) {
      for (let j = 0; j < H; j++) hl[j] = h[j] * maskH[j];
    } else {
      hl.set(h);
    }
    u2.fill(0);
    const down2 = lora.w2.down.data;
    for (let j = 0; j < H; j++) {
      const hj = hl[j];
      if (hj === 0) continue;
      const rowOff = j * r;
      for (let k = 0; k < r; k++) u2[k] += hj * down2[rowOff + k];
    }
  }

  const w2 = base.w2.data;
  logits.set(base.b2);
  for (let j = 0; j < H; j++) {
    const hj = h[j];
    if (hj === 0) continue;
    const rowOff = j * VOCAB_SIZE;
    for (let v = 0; v < VOCAB_SIZE; v++) logits[v] += hj * w2[rowOff + v];
  }
  if (lora) {
    const up2 = lora.w2.up.data;
    for (let k = 0; k < r; k++) {
      const uk = u2[k] * scale;
      if (uk === 0) continue;
      const rowOff = k * VOCAB_SIZE;
      for (let v = 0; v < VOCAB_SIZE; v++) logits[v] += uk * up2[rowOff + v];
    }
  }
}

/** Softmax of cache.logits into cache.probs; returns log of the partition shift-safe. */
export function softmaxCache(cache: ForwardCache): void {
  const { logits, probs } = cache;
  let max = -Infinity;
  for (let v = 0; v < logits.length; v++) if (logits[v] > max) max = logits[v];
  let total = 0;
  for (let v = 0; v < logits.length; v++) {
    const e = Math.exp(logits[v] - max);
    probs[v] = e;
    total += e;
  }
  for (let v = 0; v < logits.length; v++) probs[v] /= total;
}

/** Gradient buffers mirroring the trainable factors. */
export interface LoraGrads {
  w1down: Float64Array;
  w1up: Float64Array;
  w2down: Float64Array;
  w2up: Float64Array;
}

export function allocGrads(lora: LoraDelta): LoraGrads {
  return {
    w1down: new Float64Array(lora.w1.down.data.length),
    w1up: new Float64Array(lora.w1.up.data.length),
    w2down: new Float64Array(lora.w2.down.data.length),
    w2up: new Float64Array(lora.w2.up.data.length),
  };
}

export function zeroGrads(grads: LoraGrads): void {
  grads.w1down.fill(0);
  grads.w1up.fill(0);
  grads.w2down.fill(0);
  grads.w2up.fill(0);
}

/**
 * Accumulate adapter gradients for one position. `dlogits` is the gradient
 * of the scalar loss with respect to the raw logits; the caller bakes any
 * per-example weighting into it. Masks must match the forward call.
 */
export function backwardPos(
  base: BaseWeights,
  lora: LoraDelta,
  cache: ForwardCache,
  dlogits: Float64Array,
  grads: LoraGrads,
  maskX: Float64Array | null = null,
  maskH: Float64Array | null = null,
): void {
  const { spec } = base;
  const H = spec.hiddenDim;
  const IN = spec.contextSize * spec.embedDim;
  const r = lora.rank;
  const scale = lora.alpha / lora.rank;
  const { xl, u1, h, hl, u2 } = cache;

  // output adapter: logits += scale * (hl . down2) . up2
  const up2 = lora.w2.up.data;
  const du2 = new Float64Array(r);
  for (let k = 0; k < r; k++) {
    const rowOff = k * VOCAB_SIZE;
    let acc = 0;
    for (let v = 0; v < VOCAB_SIZE; v++) acc += up2[rowOff + v] * dlogits[v];
    du2[k] = acc * scale;
    const uk = u2[k] * scale;
    if (uk !== 0) {
      for (let v = 0; v < VOCAB_SIZE; v++) grads.w2up[rowOff + v] += uk * dlogits[v];
    }
  }
  const down2 = lora.w2.down.data;
  const dh = new Float64Array(H);
  for (let j = 0; j < H; j++) {
    const hj = hl[j];
    const rowOff = j * r;
    let acc = 0;
    for (let k = 0; k < r; k++) {
      grads.w2down[rowOff + k] += hj * du2[k];
      acc += down2[rowOff + k] * du2[k];
    }
    dh[j] = maskH ? acc * maskH[j] : acc;
  }

  // base projection contributes to dh as well
  const w2 = base.w2.data;
  for (let j = 0; j < H; j++) {
    const rowOff = j * VOCAB_SIZE;
    let acc = 0;
    for (let v = 0; v < VOCAB_SIZE; v++) acc += w2[rowOff + v] * dlogits[v];
    dh[j] += acc;
  }

  // through tanh
  for (let j = 0; j < H; j++) dh[j] *= 1 - h[j] * h[j];

  // hidden adapter: a1 += scale * (xl . down1) . up1
  const up1 = lora.w1.up.data;
  const du1 = new Float64Array(r);
  for (let k = 0; k < r; k++) {
    const rowOff = k * H;
    let acc = 0;
    for (let j = 0; j < H; j++) acc += up1[rowOff + j] * dh[j];
    du1[k] = acc * scale;
    const uk = u1[k] * scale;
    if (uk !== 0) {
      for (let j = 0; j < H; j++) grads.w1up[rowOff + j] += uk * dh[j];
    }
  }
  for (let i = 0; i < IN; i++) {
    const xi = xl[i];
    if (xi === 0) continue;
    const rowOff = i * r;
    for (let k = 0; k < r; k++) grads.w1down[rowOff + k] += xi * du1[k];
  }
}

// ---------------------------------------------------------------------------
// decoding

export interface DecodeOptions {
  maxTokens: number;
  stop?: readonly string[];
  temperature?: number;
}

export interface DecodeResult {
  text: string;
  finishReason: "stop" | "length";
}

/** A base plus (optionally) an adapter, ready to answer completions. */
export class CharLm {
  readonly base: BaseWeights;
  readonly lora: LoraDelta | null;
  private readonly cache: ForwardCache;

  constructor(base: BaseWeights, lora: LoraDelta | null = null) {
    this.base = base;
    this.lora = lora;
    this.cache = allocCache(base.spec, lora ? lora.rank : 1);
  }

  /** Next-character probabilities for a raw window of ids. */
  probsFor(window: Int32Array): Float64Array {
    forwardPos(this.base, this.lora, window, this.cache);
    softmaxCache(this.cache);
    return this.cache.probs;
  }

  /**
   * Greedy (temperature <= 0) or sampled completion for a prompt. Sampling
   * is seeded from the prompt text so identical requests repeat exactly.
   */
  decode(prompt: string, opts: DecodeOptions): DecodeResult {
    const C = this.base.spec.contextSize;
    const window = new Int32Array(C).fill(BOS_ID);
    const tail = prompt.slice(-C);
    for (let i = 0; i < tail.length; i++) {
      window.copyWithin(0, 1);
      window[C - 1] = encodeChar(tail[i]);
    }
    const temperature = opts.temperature ?? 0;
    const stops = (opts.stop ?? []).filter((s) => s.length > 0);
    const rng = new Rng(seedFromString(prompt) ^ 0x2c1b3c6d);

    let text = "";
    for (let step = 0; step < opts.maxTokens; step++) {
      forwardPos(this.base, this.lora, window, this.cache);
      const id = temperature <= 0 ? this.argmaxGeneratable() : this.sampleGeneratable(temperature, rng);
      text += decodeId(id);
      window.copyWithin(0, 1);
      window[C - 1] = id;
      for (const marker of stops) {
        if (text.endsWith(marker)) {
          return { text: text.slice(0, text.length - marker.length), finishReason: "stop" };
        }
      }
    }
    return { text, finishReason: "length" };
  }

  private argmaxGeneratable(): number {
    const { logits } = this.cache;
    let best = 0;
    for (let v = 1; v < GENERATABLE_IDS; v++) {
      if (logits[v] > logits[best]) best = v;
    }
    return best;
  }

  private sampleGeneratable(temperature: number, rng: Rng): number {
    const { logits } = this.cache;
    let max = -Infinity;
    for (let v = 0; v < GENERATABLE_IDS; v++) if (logits[v] > max) max = logits[v];
    let total = 0;
    const weights = new Float64Array(GENERATABLE_IDS);
    for (let v = 0; v < GENERATABLE_IDS; v++) {
      weights[v] = Math.exp((logits[v] - max) / temperature);
      total += weights[v];
    }
    let roll = rng.next() * total;
    for (let v = 0; v < GENERATABLE_IDS; v++) {
      roll -= weights[v];
      if (roll <= 0) return v;
    }
    return GENERATABLE_IDS - 1;
  }
}
