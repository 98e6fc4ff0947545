import { describe, expect, it } from "vitest";
import { writeFileSync } from "node:fs";
import { join } from "node:path";

import {
  DEFAULT_CONFIG,
  exportDigest,
  readItExport,
  readKtoExport,
  readTrainingConfig,
  withDefaults,
} from "../src/data.js";
import { ConfigError, EmptyExportError } from "../src/errors.js";
import { labeledCorpus, scaleFinderCorpus, tempDir, writeJsonl } from "./helpers.js";

describe("readItExport", () => {
  it("reads tool, prompt, completion, and id from each line", () => {
    const dir = tempDir();
    const path = writeJsonl(join(dir, "scale_finder.jsonl"), scaleFinderCorpus(5));
    const pairs = readItExport(path);
    expect(pairs).toHaveLength(5);
    expect(pairs[0].tool).toBe("Scale_Finder");
    expect(pairs[0].completion).toBe("SCALE: 'thousand'");
    expect(pairs[0].id).toBe("syn-000");
    expect(pairs[0].templateVersion).toBe(1);
  });

  it("rejects an empty file", () => {
    const dir = tempDir();
    const path = join(dir, "empty.jsonl");
    writeFileSync(path, "", "utf-8");
    expect(() => readItExport(path)).toThrow(EmptyExportError);
  });

  it("rejects a file mixing tools", () => {
    const dir = tempDir();
    const lines = scaleFinderCorpus(2);
    lines[1] = { ...lines[1], tool: "Row_Lookup" };
    const path = writeJsonl(join(dir, "mixed.jsonl"), lines);
    expect(() => readItExport(path)).toThrow(/single tool/);
  });

  it("rejects labeled lines handed to instruction tuning", () => {
    const dir = tempDir();
    const path = writeJsonl(join(dir, "labeled.jsonl"), labeledCorpus(1, 1));
    expect(() => readItExport(path)).toThrow(/preference export/);
  });

  it("points at the offending line on malformed JSON", () => {
    const dir = tempDir();
    const path = join(dir, "broken.jsonl");
    writeFileSync(path, JSON.stringify(scaleFinderCorpus(1)[0]) + "\n{nope\n", "utf-8");
    expect(() => readItExport(path)).toThrow(/broken\.jsonl:2/);
  });
});

describe("readKtoExport", () => {
  it("keeps the +1/-1 label on every pair", () => {
    const dir = tempDir();
    const path = writeJsonl(join(dir, "scale_finder.jsonl"), labeledCorpus(3, 2));
    const pairs = readKtoExport(path);
    expect(pairs.map((p) => p.label)).toEqual([1, 1, 1, -1, -1]);
  });

  it("rejects missing or out-of-range labels", () => {
    const dir = tempDir();
    const bad = scaleFinderCorpus(1).map((l) => ({ ...l, label: 0 as unknown as 1 }));
    const path = writeJsonl(join(dir, "bad.jsonl"), bad);
    expect(() => readKtoExport(path)).toThrow(/label must be 1 or -1/);
    const unlabeled = writeJsonl(join(dir, "none.jsonl"), scaleFinderCorpus(1));
    expect(() => readKtoExport(unlabeled)).toThrow(ConfigError);
  });
});

describe("training config", () => {
  it("reads the pipeline's stub layout and fills defaults", () => {
    const dir = tempDir();
    const path = join(dir, "scale_finder.json");
    writeFileSync(
      path,
      JSON.stringify({ tool: "scale_finder", desirable_weight: 1.0, undesirable_weight: 3.5 }),
      "utf-8",
    );
    const cfg = readTrainingConfig(path);
    expect(cfg.undesirableWeight).toBe(3.5);
    expect(cfg.learningRate).toBe(1e-5);
    expect(cfg.batchSize).toBe(32);
    expect(cfg.epochs).toBe(10);
    expect(cfg.loraRank).toBe(64);
    expect(cfg.loraAlpha).toBe(32);
    expect(cfg.loraDropout).toBe(0.05);
    expect(cfg.ktoBeta).toBe(0.1);
  });

  it("validates ranges", () => {
    expect(() => withDefaults({ batchSize: 0 })).toThrow(ConfigError);
    expect(() => withDefaults({ loraDropout: 1 })).toThrow(ConfigError);
    expect(() => withDefaults({ ktoBeta: -1 })).toThrow(ConfigError);
    expect(withDefaults({}).ktoBeta).toBe(DEFAULT_CONFIG.ktoBeta);
  });

  it("rejects non-numeric stub values", () => {
    const dir = tempDir();
    const path = join(dir, "bad.json");
    writeFileSync(path, JSON.stringify({ epochs: "ten" }), "utf-8");
    expect(() => readTrainingConfig(path)).toThrow(/epochs must be a finite number/);
  });
});

describe("exportDigest", () => {
  it("is stable for identical bytes and sensitive to any change", () => {
    const dir = tempDir();
    const a = writeJsonl(join(dir, "a.jsonl"), scaleFinderCorpus(3));
    const b = writeJsonl(join(dir, "b.jsonl"), scaleFinderCorpus(3));
    const c = writeJsonl(join(dir, "c.jsonl"), scaleFinderCorpus(4));
    expect(exportDigest(a)).toBe(exportDigest(b));
    expect(exportDigest(a)).not.toBe(exportDigest(c));
    expect(exportDigest(a)).toMatch(/^sha256:[0-9a-f]{64}$/);
  });
});
