/**
 * End-to-end serving contract: the upstream pipeline's `generate` command,
 * pointed at this harness in live mode, must complete a small run without a
 * single backend failure. Requires the `tabreason` CLI on PATH (or at
 * $TABREASON_BIN).
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { execFile } from "node:child_process";
import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import type { Server } from "node:http";
import { join } from "node:path";
import { promisify } from "node:util";

import { createApp, listen, registryFromArtifacts } from "../src/serve.js";
import { trainIt } from "../src/train.js";
import { scaleFinderCorpus, tempDir, writeJsonl } from "./helpers.js";

const execFileAsync = promisify(execFile);
const TABREASON_BIN = process.env.TABREASON_BIN ?? "tabreason";

let server: Server;
let port: number;
let workDir: string;

beforeAll(async () => {
  workDir = tempDir("trainer-roundtrip-");

  // one trained adapter, served both under its own name and as the default
  // routing target "base" so a stock `generate` run reaches it
  const exportPath = writeJsonl(join(workDir, "scale_finder.jsonl"), scaleFinderCorpus(20));
  const { metadataPath } = trainIt(exportPath, {
    outDir: join(workDir, "adapters"),
    config: { learningRate: 0.01, epochs: 4, batchSize: 8, loraRank: 8 },
  });
  const { registry } = registryFromArtifacts([metadataPath]);
  registry.set("base", registry.get("scale_finder-it")!);
  const bound = await listen(createApp(registry));
  server = bound.server;
  port = bound.port;
});

afterAll(() => {
  server?.close();
});

function writeToySet(dir: string): string {
  const problems: Record<string, { question: string; answer: string; table: string }> = {};
  for (let i = 0; i < 5; i++) {
    problems[`toy-${i}`] = {
      question: `What is ${i} plus ${i}?`,
      answer: String(i + i),
      table: `term | value\nx | ${i}`,
    };
  }
  const dataPath = join(dir, "tabmwp_train.json");
  writeFileSync(dataPath, JSON.stringify(problems, null, 2), "utf-8");
  const manifestPath = join(dir, "data.json");
  writeFileSync(manifestPath, JSON.stringify({ tabmwp: { train: "tabmwp_train.json" } }), "utf-8");
  return manifestPath;
}

function cleanEnv(): NodeJS.ProcessEnv {
  const env: NodeJS.ProcessEnv = {};
  for (const [key, value] of Object.entries(process.env)) {
    if (!key.startsWith("TABREASON_")) env[key] = value;
  }
  return env;
}

describe("serving round trip with the upstream pipeline", () => {
  it("completes a 5-instance generate run in live mode with zero backend failures", async () => {
    const manifestPath = writeToySet(workDir);
    const outDir = join(workDir, "run");
    mkdirSync(outDir, { recursive: true });

    const { stdout } = await execFileAsync(
      TABREASON_BIN,
      [
        "generate",
        "--phase",
        "pe",
        "--dataset",
        "tabmwp",
        "--split",
        "train",
        "--out",
        outDir,
        "--data",
        manifestPath,
        "--mode",
        "live",
        "--base-url",
        `http://127.0.0.1:${port}`,
      ],
      { env: cleanEnv(), timeout: 120_000 },
    ); // execFile rejects on a nonzero exit, so reaching here means exit 0

    expect(stdout).toContain("counts: total=5");
    expect(stdout).not.toContain("failed.backend");

    const trajectoryLine = stdout.split("\n").find((l) => l.startsWith("trajectories: "));
    expect(trajectoryLine).toBeDefined();
    const trajectoryPath = trajectoryLine!.slice("trajectories: ".length).trim();
    const records = readFileSync(trajectoryPath, "utf-8")
      .split("\n")
      .filter((l) => l.trim())
      .map((l) => JSON.parse(l));
    expect(records).toHaveLength(5);
    for (const record of records) {
      expect(record.failure?.kind).not.toBe("backend");
    }
  });
});
