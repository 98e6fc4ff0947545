/**
 * Training entry points.
 *
 * Instruction tuning runs supervised next-character prediction with the
 * loss restricted to completion characters; the prompt only supplies
 * context. Preference optimization consumes binary-labeled singletons: each
 * example pushes its completion's likelihood up (desirable) or down
 * (undesirable) through a saturating sigmoid on the log-likelihood ratio
 * against the frozen instruction-tuned parent, with class weights applied
 * per example. Both stages update only the low-rank factors.
 */

import { EmptyExportError, ConfigError, MissingParentError } from "./errors.js";
import {
  ItPair,
  KtoPair,
  TrainingConfig,
  exportDigest,
  readItExport,
  readKtoExport,
  withDefaults,
} from "./data.js";
import {
  BaseSpec,
  BaseWeights,
  ForwardCache,
  LoraDelta,
  LoraGrads,
  TINY_BASE,
  allocCache,
  allocGrads,
  backwardPos,
  baseSpecFromId,
  buildBase,
  cloneLora,
  forwardPos,
  initLora,
  softmaxCache,
  zeroGrads,
} from "./model.js";
import { AdapterArtifact, LoadedAdapter, loadArtifact, saveArtifact } from "./artifact.js";
import { Rng, seedFromString } from "./rng.js";
import { BOS_ID, VOCAB_SIZE, encode } from "./vocab.js";

export interface EpochLog {
  epoch: number;
  meanLoss: number;
}

export interface ClassMass {
  desirable: number;
  undesirable: number;
}

export interface RunLog {
  stage: "IT" | "IT+KTO";
  tool: string;
  examples: number;
  epochs: EpochLog[];
  /** Weighted example mass per class; preference runs only. */
  classMass?: ClassMass;
}

export interface TrainResult {
  artifact: AdapterArtifact;
  log: RunLog;
  metadataPath: string;
}

/** File-key spelling of a tool name: "Scale_Finder" -> "scale_finder". */
export function toolKey(tool: string): string {
  return tool.toLowerCase();
}

// ---------------------------------------------------------------------------
// shared machinery

interface EncodedExample {
  ids: Int32Array;
  promptLen: number;
  /** Number of loss-bearing positions (completion length). */
  targets: number;
}

function encodeExamples(pairs: ItPair[], what: string): EncodedExample[] {
  const out: EncodedExample[] = [];
  for (const pair of pairs) {
    if (pair.completion.length === 0) continue; // nothing to learn from
    out.push({
      ids: encode(pair.prompt + pair.completion),
      promptLen: pair.prompt.length,
      targets: pair.completion.length,
    });
  }
  if (out.length === 0) {
    throw new ConfigError(`${what}: every pair has an empty completion`);
  }
  return out;
}

function fillWindow(ids: Int32Array, pos: number, contextSize: number, window: Int32Array): void {
  for (let c = 0; c < contextSize; c++) {
    const src = pos - contextSize + c;
    window[c] = src >= 0 ? ids[src] : BOS_ID;
  }
}

function fillDropoutMask(mask: Float64Array, p: number, rng: Rng): void {
  const keep = 1 / (1 - p);
  for (let i = 0; i < mask.length; i++) mask[i] = rng.next() < p ? 0 : keep;
}

function logProbOf(probs: Float64Array, target: number): number {
  return Math.log(Math.max(probs[target], Number.MIN_VALUE));
}

class Adam {
  private step = 0;
  private readonly m: Float64Array[];
  private readonly v: Float64Array[];
  private readonly params: Float64Array[];

  constructor(lora: LoraDelta, private readonly lr: number) {
    this.params = [lora.w1.down.data, lora.w1.up.data, lora.w2.down.data, lora.w2.up.data];
    this.m = this.params.map((p) => new Float64Array(p.length));
    this.v = this.params.map((p) => new Float64Array(p.length));
  }

  apply(grads: LoraGrads): void {
    this.step++;
    const g = [grads.w1down, grads.w1up, grads.w2down, grads.w2up];
    const bc1 = 1 - Math.pow(0.9, this.step);
    const bc2 = 1 - Math.pow(0.999, this.step);
    for (let t = 0; t < this.params.length; t++) {
      const param = this.params[t];
      const m = this.m[t];
      const v = this.v[t];
      const grad = g[t];
      for (let i = 0; i < param.length; i++) {
        m[i] = 0.9 * m[i] + 0.1 * grad[i];
        v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
        param[i] -= (this.lr * (m[i] / bc1)) / (Math.sqrt(v[i] / bc2) + 1e-8);
      }
    }
  }
}

interface TrainerState {
  base: BaseWeights;
  lora: LoraDelta;
  cache: ForwardCache;
  grads: LoraGrads;
  dlogits: Float64Array;
  window: Int32Array;
  maskX: Float64Array | null;
  maskH: Float64Array | null;
  dropout: number;
  rng: Rng;
}

function makeState(base: BaseWeights, lora: LoraDelta, dropout: number, rng: Rng): TrainerState {
  const spec = base.spec;
  const inputDim = spec.contextSize * spec.embedDim;
  return {
    base,
    lora,
    cache: allocCache(spec, lora.rank),
    grads: allocGrads(lora),
    dlogits: new Float64Array(VOCAB_SIZE),
    window: new Int32Array(spec.contextSize),
    maskX: dropout > 0 ? new Float64Array(inputDim) : null,
    maskH: dropout > 0 ? new Float64Array(spec.hiddenDim) : null,
    dropout,
    rng,
  };
}

function prepareMasks(st: TrainerState): void {
  if (st.maskX && st.maskH) {
    fillDropoutMask(st.maskX, st.dropout, st.rng);
    fillDropoutMask(st.maskH, st.dropout, st.rng);
  }
}

/**
 * Forward + backward over one example's completion positions. `outScale`
 * multiplies the cross-entropy logit gradient (p - onehot); cross-entropy
 * training passes a positive weight, preference training a signed one.
 * Returns the mean completion log-probability.
 */
function accumulateExample(st: TrainerState, ex: EncodedExample, outScale: number): number {
  const C = st.base.spec.contextSize;
  let logpSum = 0;
  for (let pos = ex.promptLen; pos < ex.ids.length; pos++) {
    fillWindow(ex.ids, pos, C, st.window);
    prepareMasks(st);
    forwardPos(st.base, st.lora, st.window, st.cache, st.maskX, st.maskH);
    softmaxCache(st.cache);
    const target = ex.ids[pos];
    logpSum += logProbOf(st.cache.probs, target);
    if (outScale !== 0) {
      const probs = st.cache.probs;
      for (let v = 0; v < VOCAB_SIZE; v++) st.dlogits[v] = probs[v] * outScale;
      st.dlogits[target] -= outScale;
      backwardPos(st.base, st.lora, st.cache, st.dlogits, st.grads, st.maskX, st.maskH);
    }
  }
  return logpSum / ex.targets;
}

function resolveBase(base: BaseSpec | string | undefined): BaseSpec {
  if (base === undefined) return TINY_BASE;
  if (typeof base === "string") return baseSpecFromId(base);
  return base;
}

// ---------------------------------------------------------------------------
// instruction tuning

export interface TrainItOptions {
  outDir: string;
  base?: BaseSpec | string;
  config?: Partial<TrainingConfig>;
  /** Serving name; defaults to "<tool key>-it". */
  name?: string;
}

/** Supervised fine-tune on one tool's prompt/completion export. */
export function trainIt(exportPath: string, opts: TrainItOptions): TrainResult {
  const pairs = readItExport(exportPath);
  const cfg = withDefaults(opts.config);
  const spec = resolveBase(opts.base);
  const digest = exportDigest(exportPath);
  const tool = pairs[0].tool;
  const name = opts.name ?? `${toolKey(tool)}-it`;

  const base = buildBase(spec);
  const lora = initLora(spec, cfg.loraRank, cfg.loraAlpha, seedFromString(digest) ^ spec.seed);
  const rng = new Rng(seedFromString(`${digest}:${name}:it`));
  const st = makeState(base, lora, cfg.loraDropout, rng);
  const adam = new Adam(lora, cfg.learningRate);
  const examples = encodeExamples(pairs, exportPath);

  const order = examples.map((_, i) => i);
  const epochs: EpochLog[] = [];
  for (let epoch = 1; epoch <= cfg.epochs; epoch++) {
    rng.shuffle(order);
    let lossSum = 0;
    for (let start = 0; start < order.length; start += cfg.batchSize) {
      const batch = order.slice(start, start + cfg.batchSize);
      zeroGrads(st.grads);
      for (const idx of batch) {
        const ex = examples[idx];
        // mean over the example's positions, then over examples in the batch
        const meanLogp = accumulateExample(st, ex, 1 / (ex.targets * batch.length));
        lossSum += -meanLogp;
      }
      adam.apply(st.grads);
    }
    epochs.push({ epoch, meanLoss: lossSum / examples.length });
  }

  const artifact: AdapterArtifact = {
    name,
    tool,
    baseModel: spec.id,
    stage: "IT",
    hyperparameters: cfg,
    weightsFile: `${name}.weights.json`,
    dataDigest: digest,
    parent: null,
    loraTargets: ["w1", "w2"],
    loraRank: lora.rank,
  };
  const metadataPath = saveArtifact(opts.outDir, artifact, lora);
  const log: RunLog = { stage: "IT", tool, examples: examples.length, epochs };
  return { artifact, log, metadataPath };
}

// ---------------------------------------------------------------------------
// preference optimization

export interface TrainKtoOptions {
  outDir: string;
  config?: Partial<TrainingConfig>;
  /** Serving name; defaults to "<tool key>-kto". */
  name?: string;
  /** Allow an export whose labels are all one class. */
  acknowledgeDegenerate?: boolean;
}

function sigmoid(x: number): number {
  return 1 / (1 + Math.exp(-x));
}

/**
 * Continue an instruction-tuned adapter on binary-labeled singletons. The
 * parent serves as the frozen reference; training starts from its weights.
 */
export function trainKto(
  exportPath: string,
  parent: string | LoadedAdapter,
  opts: TrainKtoOptions,
): TrainResult {
  let loaded: LoadedAdapter;
  if (typeof parent === "string") {
    try {
      loaded = loadArtifact(parent);
    } catch (err) {
      throw new MissingParentError(`cannot load parent artifact: ${(err as Error).message}`);
    }
  } else {
    loaded = parent;
  }
  if (loaded.artifact.stage !== "IT") {
    throw new MissingParentError(
      `parent must be an instruction-tuned artifact, got stage ${loaded.artifact.stage}`,
    );
  }

  const pairs = readKtoExport(exportPath);
  const tool = pairs[0].tool;
  if (tool !== loaded.artifact.tool) {
    throw new ConfigError(
      `export is for ${tool} but the parent was trained for ${loaded.artifact.tool}`,
    );
  }
  const cfg = withDefaults(opts.config);
  const digest = exportDigest(exportPath);
  const name = opts.name ?? `${toolKey(tool)}-kto`;

  const nPos = pairs.filter((p) => p.label === 1).length;
  const nNeg = pairs.length - nPos;
  if ((nPos === 0 || nNeg === 0) && !opts.acknowledgeDegenerate) {
    throw new ConfigError(
      `${exportPath}: single-class export (desirable=${nPos}, undesirable=${nNeg}); ` +
        "pass acknowledgeDegenerate to train anyway",
    );
  }
  const classMass: ClassMass = {
    desirable: nPos * cfg.desirableWeight,
    undesirable: nNeg * cfg.undesirableWeight,
  };

  const base = loaded.base;
  const refLora = loaded.lora;
  const policyLora = cloneLora(refLora);
  const rng = new Rng(seedFromString(`${digest}:${name}:kto`));
  const st = makeState(base, policyLora, cfg.loraDropout, rng);
  const refState = makeState(base, refLora, 0, rng);
  const adam = new Adam(policyLora, cfg.learningRate);

  const kept: KtoPair[] = pairs.filter((p) => p.completion.length > 0);
  const examples = encodeExamples(kept, exportPath);
  const labels = kept.map((p) => p.label);

  // The reference never moves; score each completion under it once.
  const refLogp = examples.map((ex) => accumulateExample(refState, ex, 0));

  const beta = cfg.ktoBeta;
  const order = examples.map((_, i) => i);
  const epochs: EpochLog[] = [];
  for (let epoch = 1; epoch <= cfg.epochs; epoch++) {
    rng.shuffle(order);
    let lossSum = 0;
    for (let start = 0; start < order.length; start += cfg.batchSize) {
      const batch = order.slice(start, start + cfg.batchSize);
      zeroGrads(st.grads);
      for (const idx of batch) {
        const ex = examples[idx];
        // same dropout masks for the scoring pass and the gradient pass
        const maskSeed = rng.int(0x7fffffff);
        st.rng = new Rng(maskSeed);
        const margin = beta * (accumulateExample(st, ex, 0) - refLogp[idx]);
        let loss: number;
        let gradCoeff: number; // multiplies (p - onehot); positive raises likelihood
        if (labels[idx] === 1) {
          const s = sigmoid(margin);
          loss = cfg.desirableWeight * (1 - s);
          gradCoeff = cfg.desirableWeight * beta * s * (1 - s);
        } else {
          const s = sigmoid(-margin);
          loss = cfg.undesirableWeight * (1 - s);
          gradCoeff = -cfg.undesirableWeight * beta * s * (1 - s);
        }
        lossSum += loss;
        st.rng = new Rng(maskSeed);
        accumulateExample(st, ex, gradCoeff / (ex.targets * batch.length));
      }
      adam.apply(st.grads);
    }
    epochs.push({ epoch, meanLoss: lossSum / examples.length });
  }

  const artifact: AdapterArtifact = {
    name,
    tool,
    baseModel: base.spec.id,
    stage: "IT+KTO",
    hyperparameters: cfg,
    weightsFile: `${name}.weights.json`,
    dataDigest: digest,
    parent: { name: loaded.artifact.name, dataDigest: loaded.artifact.dataDigest },
    loraTargets: ["w1", "w2"],
    loraRank: policyLora.rank,
  };
  const metadataPath = saveArtifact(opts.outDir, artifact, policyLora);
  const log: RunLog = {
    stage: "IT+KTO",
    tool,
    examples: examples.length,
    epochs,
    classMass,
  };
  return { artifact, log, metadataPath };
}
