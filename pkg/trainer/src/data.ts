/**
 * Readers for the upstream pipeline's training exports.
 *
 * The pipeline writes one JSONL file per tool: instruction-tuning lines are
 * {tool, prompt, completion, id} and preference lines add a +1/-1 label.
 * Hyperparameter stubs live beside them in configs/<tool>.json. All label
 * and prompt semantics are decided upstream; this module only validates
 * shape and never re-derives anything.
 */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

import { ConfigError, EmptyExportError } from "./errors.js";

export interface ItPair {
  tool: string;
  prompt: string;
  completion: string;
  id: string;
  templateVersion?: number;
}

export interface KtoPair extends ItPair {
  label: 1 | -1;
}

export interface TrainingConfig {
  learningRate: number;
  batchSize: number;
  epochs: number;
  loraRank: number;
  loraAlpha: number;
  loraDropout: number;
  ktoBeta: number;
  desirableWeight: number;
  undesirableWeight: number;
}

export const DEFAULT_CONFIG: TrainingConfig = {
  learningRate: 1e-5,
  batchSize: 32,
  epochs: 10,
  loraRank: 64,
  loraAlpha: 32,
  loraDropout: 0.05,
  ktoBeta: 0.1,
  desirableWeight: 1.0,
  undesirableWeight: 1.0,
};

export function withDefaults(partial: Partial<TrainingConfig> = {}): TrainingConfig {
  const cfg = { ...DEFAULT_CONFIG, ...partial };
  if (cfg.learningRate <= 0) throw new ConfigError(`learning rate must be positive, got ${cfg.learningRate}`);
  if (!Number.isInteger(cfg.batchSize) || cfg.batchSize < 1) {
    throw new ConfigError(`batch size must be a positive integer, got ${cfg.batchSize}`);
  }
  if (!Number.isInteger(cfg.epochs) || cfg.epochs < 1) {
    throw new ConfigError(`epochs must be a positive integer, got ${cfg.epochs}`);
  }
  if (!Number.isInteger(cfg.loraRank) || cfg.loraRank < 1) {
    throw new ConfigError(`adapter rank must be a positive integer, got ${cfg.loraRank}`);
  }
  if (cfg.loraDropout < 0 || cfg.loraDropout >= 1) {
    throw new ConfigError(`dropout must be in [0, 1), got ${cfg.loraDropout}`);
  }
  if (cfg.ktoBeta <= 0) throw new ConfigError(`beta must be positive, got ${cfg.ktoBeta}`);
  if (cfg.desirableWeight <= 0 || cfg.undesirableWeight <= 0) {
    throw new ConfigError(
      `class weights must be positive, got (${cfg.desirableWeight}, ${cfg.undesirableWeight})`,
    );
  }
  return cfg;
}

/** Snake-case keys used by the stub files the pipeline writes. */
const CONFIG_STUB_KEYS: Record<string, keyof TrainingConfig> = {
  learning_rate: "learningRate",
  batch_size: "batchSize",
  epochs: "epochs",
  lora_rank: "loraRank",
  lora_alpha: "loraAlpha",
  lora_dropout: "loraDropout",
  kto_beta: "ktoBeta",
  desirable_weight: "desirableWeight",
  undesirable_weight: "undesirableWeight",
};

/** Read a configs/<tool>.json stub, filling any omitted field with defaults. */
export function readTrainingConfig(path: string): TrainingConfig {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, "utf-8"));
  } catch (err) {
    throw new ConfigError(`${path}: ${(err as Error).message}`);
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new ConfigError(`${path}: expected a JSON object`);
  }
  const partial: Partial<TrainingConfig> = {};
  for (const [stubKey, cfgKey] of Object.entries(CONFIG_STUB_KEYS)) {
    const value = (raw as Record<string, unknown>)[stubKey];
    if (value === undefined) continue;
    if (typeof value !== "number" || !Number.isFinite(value)) {
      throw new ConfigError(`${path}: ${stubKey} must be a finite number, got ${JSON.stringify(value)}`);
    }
    partial[cfgKey] = value;
  }
  return withDefaults(partial);
}

function parseLine(path: string, lineNo: number, line: string): Record<string, unknown> {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch (err) {
    throw new ConfigError(`${path}:${lineNo}: not valid JSON: ${(err as Error).message}`);
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new ConfigError(`${path}:${lineNo}: expected a JSON object`);
  }
  return obj as Record<string, unknown>;
}

function requireString(path: string, lineNo: number, obj: Record<string, unknown>, key: string): string {
  const value = obj[key];
  if (typeof value !== "string") {
    throw new ConfigError(`${path}:${lineNo}: missing or non-string "${key}"`);
  }
  return value;
}

function basePair(path: string, lineNo: number, obj: Record<string, unknown>): ItPair {
  const pair: ItPair = {
    tool: requireString(path, lineNo, obj, "tool"),
    prompt: requireString(path, lineNo, obj, "prompt"),
    completion: requireString(path, lineNo, obj, "completion"),
    id: requireString(path, lineNo, obj, "id"),
  };
  if (obj.template_version !== undefined) {
    if (typeof obj.template_version !== "number") {
      throw new ConfigError(`${path}:${lineNo}: template_version must be a number`);
    }
    pair.templateVersion = obj.template_version;
  }
  return pair;
}

function readLines(path: string): Array<[number, Record<string, unknown>]> {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch (err) {
    throw new ConfigError(`cannot read ${path}: ${(err as Error).message}`);
  }
  const out: Array<[number, Record<string, unknown>]> = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    out.push([i + 1, parseLine(path, i + 1, line)]);
  }
  return out;
}

function requireSingleTool(path: string, pairs: ItPair[]): void {
  const tools = new Set(pairs.map((p) => p.tool));
  if (tools.size > 1) {
    throw new ConfigError(`${path}: expected a single tool per file, found ${[...tools].sort().join(", ")}`);
  }
}

/** Read an instruction-tuning export: unlabeled prompt/completion pairs for one tool. */
export function readItExport(path: string): ItPair[] {
  const pairs: ItPair[] = [];
  for (const [lineNo, obj] of readLines(path)) {
    if (obj.label !== undefined) {
      throw new ConfigError(`${path}:${lineNo}: instruction-tuning lines carry no label; is this a preference export?`);
    }
    pairs.push(basePair(path, lineNo, obj));
  }
  if (pairs.length === 0) throw new EmptyExportError(`${path}: no training pairs`);
  requireSingleTool(path, pairs);
  return pairs;
}

/** Read a preference export: the same pairs with a +1/-1 label on each. */
export function readKtoExport(path: string): KtoPair[] {
  const pairs: KtoPair[] = [];
  for (const [lineNo, obj] of readLines(path)) {
    const label = obj.label;
    if (label !== 1 && label !== -1) {
      throw new ConfigError(`${path}:${lineNo}: label must be 1 or -1, got ${JSON.stringify(label)}`);
    }
    pairs.push({ ...basePair(path, lineNo, obj), label });
  }
  if (pairs.length === 0) throw new EmptyExportError(`${path}: no training pairs`);
  requireSingleTool(path, pairs);
  return pairs;
}

/** Content digest of an export file, recorded in artifact metadata. */
export function exportDigest(path: string): string {
  const bytes = readFileSync(path);
  return "sha256:" + createHash("sha256").update(bytes).digest("hex");
}
