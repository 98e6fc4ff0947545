import { describe, expect, it } from "vitest";
import { readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { trainIt, trainKto } from "../src/train.js";
import { loadArtifact } from "../src/artifact.js";
import { ConfigError, EmptyExportError, MissingParentError } from "../src/errors.js";
import { labeledCorpus, scaleFinderCorpus, tempDir, writeJsonl } from "./helpers.js";

// toy-scale optimization settings; dataset shape and epoch structure stay stock
const TOY = { learningRate: 0.01, loraRank: 8, loraDropout: 0.05 };

describe("instruction tuning", () => {
  it("drives the mean loss strictly down on a 50-pair corpus inside the time budget", () => {
    const dir = tempDir();
    const path = writeJsonl(join(dir, "scale_finder.jsonl"), scaleFinderCorpus(50));
    const started = Date.now();
    const { artifact, log } = trainIt(path, {
      outDir: join(dir, "out"),
      config: { ...TOY, epochs: 10, batchSize: 32 },
    });
    const elapsed = Date.now() - started;
    expect(log.epochs).toHaveLength(10);
    const first = log.epochs[0].meanLoss;
    const last = log.epochs[9].meanLoss;
    expect(last).toBeLessThan(first);
    expect(Number.isFinite(first) && Number.isFinite(last)).toBe(true);
    expect(artifact.stage).toBe("IT");
    expect(artifact.parent).toBeNull();
    expect(elapsed).toBeLessThan(15 * 60 * 1000);
  });

  it("records the exact hyperparameters it was given", () => {
    const dir = tempDir();
    const path = writeJsonl(join(dir, "scale_finder.jsonl"), scaleFinderCorpus(8));
    const { artifact, metadataPath } = trainIt(path, {
      outDir: join(dir, "out"),
      config: { ...TOY, epochs: 10, batchSize: 32 },
    });
    expect(artifact.hyperparameters.epochs).toBe(10);
    expect(artifact.hyperparameters.batchSize).toBe(32);
    const onDisk = JSON.parse(readFileSync(metadataPath, "utf-8"));
    expect(onDisk.hyperparameters.epochs).toBe(10);
    expect(onDisk.hyperparameters.batch_size).toBe(32);
    expect(onDisk.base_model).toBe(artifact.baseModel);
  });

  it("rejects an empty export", () => {
    const dir = tempDir();
    const path = join(dir, "empty.jsonl");
    writeFileSync(path, "\n", "utf-8");
    expect(() => trainIt(path, { outDir: dir })).toThrow(EmptyExportError);
  });

  it("is deterministic: identical inputs produce identical artifact bytes", () => {
    const dir = tempDir();
    const path = writeJsonl(join(dir, "scale_finder.jsonl"), scaleFinderCorpus(12));
    const cfg = { ...TOY, epochs: 3, batchSize: 4 };
    const a = trainIt(path, { outDir: join(dir, "a"), config: cfg });
    const b = trainIt(path, { outDir: join(dir, "b"), config: cfg });
    expect(readFileSync(a.metadataPath, "utf-8")).toBe(readFileSync(b.metadataPath, "utf-8"));
    const weightsOf = (metaPath: string, outDir: string) =>
      readFileSync(join(outDir, JSON.parse(readFileSync(metaPath, "utf-8")).weights), "utf-8");
    expect(weightsOf(a.metadataPath, join(dir, "a"))).toBe(weightsOf(b.metadataPath, join(dir, "b")));
  });
});

describe("preference optimization", () => {
  function trainedParent(dir: string) {
    const itPath = writeJsonl(join(dir, "it", "scale_finder.jsonl"), scaleFinderCorpus(10));
    return trainIt(itPath, { outDir: join(dir, "adapters"), config: { ...TOY, epochs: 3, batchSize: 4 } });
  }

  it("logs weighted class mass balanced within 1% for weights (1, 3.0) on a 75/25 split", () => {
    const dir = tempDir();
    const parent = trainedParent(dir);
    const ktoPath = writeJsonl(join(dir, "scale_finder.jsonl"), labeledCorpus(75, 25));
    const started = Date.now();
    const { artifact, log } = trainKto(ktoPath, parent.metadataPath, {
      outDir: join(dir, "adapters"),
      config: { ...TOY, epochs: 5, batchSize: 16, desirableWeight: 1.0, undesirableWeight: 3.0 },
    });
    const elapsed = Date.now() - started;
    expect(log.classMass).toBeDefined();
    const { desirable, undesirable } = log.classMass!;
    expect(desirable).toBe(75);
    expect(undesirable).toBe(75);
    expect(Math.abs(desirable - undesirable) / Math.max(desirable, undesirable)).toBeLessThanOrEqual(0.01);
    expect(log.epochs[log.epochs.length - 1].meanLoss).toBeLessThan(log.epochs[0].meanLoss);
    expect(artifact.stage).toBe("IT+KTO");
    expect(elapsed).toBeLessThan(15 * 60 * 1000);
  });

  it("defaults beta to 0.1 when the config omits it", () => {
    const dir = tempDir();
    const parent = trainedParent(dir);
    const ktoPath = writeJsonl(join(dir, "scale_finder.jsonl"), labeledCorpus(6, 2));
    const { artifact } = trainKto(ktoPath, parent.metadataPath, {
      outDir: join(dir, "adapters"),
      config: { ...TOY, epochs: 1, batchSize: 4 },
    });
    expect(artifact.hyperparameters.ktoBeta).toBe(0.1);
  });

  it("records its instruction-tuned parent", () => {
    const dir = tempDir();
    const parent = trainedParent(dir);
    const ktoPath = writeJsonl(join(dir, "scale_finder.jsonl"), labeledCorpus(4, 4));
    const { artifact, metadataPath } = trainKto(ktoPath, parent.metadataPath, {
      outDir: join(dir, "adapters"),
      config: { ...TOY, epochs: 1, batchSize: 4 },
    });
    expect(artifact.parent).toEqual({
      name: parent.artifact.name,
      dataDigest: parent.artifact.dataDigest,
    });
    const reloaded = loadArtifact(metadataPath);
    expect(reloaded.artifact.parent?.name).toBe("scale_finder-it");
  });

  it("continues from the parent weights", () => {
    const dir = tempDir();
    const parent = trainedParent(dir);
    const ktoPath = writeJsonl(join(dir, "scale_finder.jsonl"), labeledCorpus(4, 4));
    // a vanishing learning rate keeps the child numerically at its parent
    const { metadataPath } = trainKto(ktoPath, parent.metadataPath, {
      outDir: join(dir, "adapters"),
      config: { ...TOY, learningRate: 1e-300, epochs: 1, batchSize: 4, loraDropout: 0 },
    });
    const child = loadArtifact(metadataPath);
    const prompt = scaleFinderCorpus(1)[0].prompt;
    const parentText = loadArtifact(parent.metadataPath).lm.decode(prompt, { maxTokens: 20 }).text;
    const childText = child.lm.decode(prompt, { maxTokens: 20 }).text;
    expect(childText).toBe(parentText);
  });

  it("rejects a missing or wrong-stage parent", () => {
    const dir = tempDir();
    const ktoPath = writeJsonl(join(dir, "scale_finder.jsonl"), labeledCorpus(2, 2));
    expect(() =>
      trainKto(ktoPath, join(dir, "nope.json"), { outDir: dir, config: { ...TOY, epochs: 1 } }),
    ).toThrow(MissingParentError);

    const parent = trainedParent(dir);
    const child = trainKto(ktoPath, parent.metadataPath, {
      outDir: join(dir, "adapters"),
      config: { ...TOY, epochs: 1, batchSize: 4 },
    });
    expect(() =>
      trainKto(ktoPath, child.metadataPath, { outDir: dir, config: { ...TOY, epochs: 1 } }),
    ).toThrow(MissingParentError);
  });

  it("rejects a single-class export unless the caller acknowledges it", () => {
    const dir = tempDir();
    const parent = trainedParent(dir);
    const ktoPath = writeJsonl(join(dir, "scale_finder.jsonl"), labeledCorpus(5, 0));
    const opts = { outDir: join(dir, "adapters"), config: { ...TOY, epochs: 1, batchSize: 4 } };
    expect(() => trainKto(ktoPath, parent.metadataPath, opts)).toThrow(ConfigError);
    const { log } = trainKto(ktoPath, parent.metadataPath, { ...opts, acknowledgeDegenerate: true });
    expect(log.classMass?.undesirable).toBe(0);
  });

  it("rejects an export whose tool does not match the parent", () => {
    const dir = tempDir();
    const parent = trainedParent(dir);
    const other = labeledCorpus(2, 2).map((l) => ({ ...l, tool: "Row_Lookup" }));
    const ktoPath = writeJsonl(join(dir, "row_lookup.jsonl"), other);
    expect(() =>
      trainKto(ktoPath, parent.metadataPath, { outDir: dir, config: { ...TOY, epochs: 1 } }),
    ).toThrow(/parent was trained for/);
  });
});
