/**
 * Adapter artifacts: a metadata JSON document written beside the weight
 * payload. Base weights are never stored; the base model identifier plus
 * its seed reproduces them exactly, so an artifact directory is small and
 * fully self-describing. Nothing here carries timestamps: retraining on
 * identical inputs yields byte-identical files.
 */

import { existsSync, mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname, join, resolve } from "node:path";

import { ConfigError, LoadError } from "./errors.js";
import { TrainingConfig, withDefaults } from "./data.js";
import {
  BaseWeights,
  CharLm,
  LoraDelta,
  Matrix,
  baseSpecFromId,
  buildBase,
} from "./model.js";

export interface ParentRef {
  name: string;
  dataDigest: string;
}

export type Stage = "IT" | "IT+KTO";

export interface AdapterArtifact {
  /** Serving name, e.g. "scale_finder-it" or "planner-it-kto". */
  name: string;
  /** Tool name exactly as the export spells it ("Scale_Finder", "planner", ...). */
  tool: string;
  baseModel: string;
  stage: Stage;
  hyperparameters: TrainingConfig;
  /** Weight payload file, relative to the metadata document. */
  weightsFile: string;
  dataDigest: string;
  /** Preference-stage artifacts always record the instruction-tuned parent. */
  parent: ParentRef | null;
  loraTargets: string[];
  /** Rank actually materialized after capping to the smallest matrix dimension. */
  loraRank: number;
}

const STUB_KEYS: Array<[string, keyof TrainingConfig]> = [
  ["learning_rate", "learningRate"],
  ["batch_size", "batchSize"],
  ["epochs", "epochs"],
  ["lora_rank", "loraRank"],
  ["lora_alpha", "loraAlpha"],
  ["lora_dropout", "loraDropout"],
  ["kto_beta", "ktoBeta"],
  ["desirable_weight", "desirableWeight"],
  ["undesirable_weight", "undesirableWeight"],
];

function configToJson(cfg: TrainingConfig): Record<string, number> {
  const out: Record<string, number> = {};
  for (const [stubKey, cfgKey] of STUB_KEYS) out[stubKey] = cfg[cfgKey];
  return out;
}

function configFromJson(raw: Record<string, unknown>): TrainingConfig {
  const partial: Partial<TrainingConfig> = {};
  for (const [stubKey, cfgKey] of STUB_KEYS) {
    const value = raw[stubKey];
    if (value === undefined) continue;
    if (typeof value !== "number") throw new LoadError(`hyperparameter ${stubKey} is not a number`);
    partial[cfgKey] = value;
  }
  return withDefaults(partial);
}

function matrixToJson(m: Matrix): { rows: number; cols: number; data: number[] } {
  return { rows: m.rows, cols: m.cols, data: Array.from(m.data) };
}

function matrixFromJson(raw: unknown, label: string): Matrix {
  const obj = raw as { rows?: unknown; cols?: unknown; data?: unknown };
  if (
    typeof obj !== "object" ||
    obj === null ||
    typeof obj.rows !== "number" ||
    typeof obj.cols !== "number" ||
    !Array.isArray(obj.data)
  ) {
    throw new LoadError(`${label}: malformed matrix`);
  }
  if (obj.data.length !== obj.rows * obj.cols) {
    throw new LoadError(`${label}: expected ${obj.rows * obj.cols} values, found ${obj.data.length}`);
  }
  return { rows: obj.rows, cols: obj.cols, data: Float64Array.from(obj.data as number[]) };
}

/** Write metadata plus weight payload into `dir`; returns the metadata path. */
export function saveArtifact(dir: string, artifact: AdapterArtifact, lora: LoraDelta): string {
  mkdirSync(dir, { recursive: true });
  const weightsPath = join(dir, artifact.weightsFile);
  const payload = {
    base: artifact.baseModel,
    rank: lora.rank,
    alpha: lora.alpha,
    w1: { down: matrixToJson(lora.w1.down), up: matrixToJson(lora.w1.up) },
    w2: { down: matrixToJson(lora.w2.down), up: matrixToJson(lora.w2.up) },
  };
  writeFileSync(weightsPath, JSON.stringify(payload) + "\n", "utf-8");

  const meta = {
    name: artifact.name,
    tool: artifact.tool,
    base_model: artifact.baseModel,
    stage: artifact.stage,
    hyperparameters: configToJson(artifact.hyperparameters),
    weights: artifact.weightsFile,
    data_digest: artifact.dataDigest,
    parent: artifact.parent
      ? { name: artifact.parent.name, data_digest: artifact.parent.dataDigest }
      : null,
    lora: { targets: artifact.loraTargets, rank: artifact.loraRank, alpha: lora.alpha },
  };
  const metaPath = join(dir, `${artifact.name}.json`);
  writeFileSync(metaPath, JSON.stringify(meta, null, 2) + "\n", "utf-8");
  return metaPath;
}

export interface LoadedAdapter {
  artifact: AdapterArtifact;
  base: BaseWeights;
  lora: LoraDelta;
  lm: CharLm;
  metadataPath: string;
}

/** Read an artifact back and rebuild the runnable model behind it. */
export function loadArtifact(metadataPath: string): LoadedAdapter {
  const metaAbs = resolve(metadataPath);
  let rawMeta: Record<string, unknown>;
  try {
    rawMeta = JSON.parse(readFileSync(metaAbs, "utf-8"));
  } catch (err) {
    throw new LoadError(`cannot read artifact metadata ${metadataPath}: ${(err as Error).message}`);
  }
  const name = rawMeta.name;
  const tool = rawMeta.tool;
  const baseModel = rawMeta.base_model;
  const stage = rawMeta.stage;
  const weightsFile = rawMeta.weights;
  const dataDigest = rawMeta.data_digest;
  if (
    typeof name !== "string" ||
    typeof tool !== "string" ||
    typeof baseModel !== "string" ||
    typeof weightsFile !== "string" ||
    typeof dataDigest !== "string"
  ) {
    throw new LoadError(`${metadataPath}: missing required metadata fields`);
  }
  if (stage !== "IT" && stage !== "IT+KTO") {
    throw new LoadError(`${metadataPath}: unknown stage ${JSON.stringify(stage)}`);
  }
  let parent: ParentRef | null = null;
  if (rawMeta.parent !== null && rawMeta.parent !== undefined) {
    const p = rawMeta.parent as Record<string, unknown>;
    if (typeof p.name !== "string" || typeof p.data_digest !== "string") {
      throw new LoadError(`${metadataPath}: malformed parent reference`);
    }
    parent = { name: p.name, dataDigest: p.data_digest };
  }
  if (stage === "IT+KTO" && parent === null) {
    throw new LoadError(`${metadataPath}: preference-stage artifact lacks its parent reference`);
  }
  const loraMeta = (rawMeta.lora ?? {}) as Record<string, unknown>;
  const hyperparameters = configFromJson((rawMeta.hyperparameters ?? {}) as Record<string, unknown>);

  const weightsPath = join(dirname(metaAbs), weightsFile);
  if (!existsSync(weightsPath)) {
    throw new LoadError(`${metadataPath}: weight payload ${weightsFile} not found`);
  }
  let rawWeights: Record<string, unknown>;
  try {
    rawWeights = JSON.parse(readFileSync(weightsPath, "utf-8"));
  } catch (err) {
    throw new LoadError(`cannot read weights ${weightsPath}: ${(err as Error).message}`);
  }
  if (rawWeights.base !== baseModel) {
    throw new LoadError(`${weightsPath}: payload base ${String(rawWeights.base)} does not match metadata`);
  }
  if (typeof rawWeights.rank !== "number" || typeof rawWeights.alpha !== "number") {
    throw new LoadError(`${weightsPath}: missing rank or alpha`);
  }
  const w1 = rawWeights.w1 as Record<string, unknown>;
  const w2 = rawWeights.w2 as Record<string, unknown>;
  if (typeof w1 !== "object" || w1 === null || typeof w2 !== "object" || w2 === null) {
    throw new LoadError(`${weightsPath}: missing adapter factors`);
  }
  const lora: LoraDelta = {
    rank: rawWeights.rank,
    alpha: rawWeights.alpha,
    w1: { down: matrixFromJson(w1.down, `${weightsPath} w1.down`), up: matrixFromJson(w1.up, `${weightsPath} w1.up`) },
    w2: { down: matrixFromJson(w2.down, `${weightsPath} w2.down`), up: matrixFromJson(w2.up, `${weightsPath} w2.up`) },
  };

  let base: BaseWeights;
  try {
    base = buildBase(baseSpecFromId(baseModel));
  } catch (err) {
    if (err instanceof ConfigError) throw new LoadError(`${metadataPath}: ${err.message}`);
    throw err;
  }
  const inputDim = base.spec.contextSize * base.spec.embedDim;
  if (lora.w1.down.rows !== inputDim || lora.w1.up.cols !== base.spec.hiddenDim) {
    throw new LoadError(`${weightsPath}: adapter shapes do not fit base ${baseModel}`);
  }

  const artifact: AdapterArtifact = {
    name,
    tool,
    baseModel,
    stage,
    hyperparameters,
    weightsFile,
    dataDigest,
    parent,
    loraTargets: Array.isArray(loraMeta.targets) ? (loraMeta.targets as string[]) : ["w1", "w2"],
    loraRank: typeof loraMeta.rank === "number" ? loraMeta.rank : lora.rank,
  };
  return { artifact, base, lora, lm: new CharLm(base, lora), metadataPath: metaAbs };
}
