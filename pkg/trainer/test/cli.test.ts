import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { writeFileSync } from "node:fs";
import { join } from "node:path";

import { runCli } from "../src/cli.js";
import { labeledCorpus, scaleFinderCorpus, tempDir, writeJsonl } from "./helpers.js";

let logs: string[];
let errors: string[];

beforeEach(() => {
  logs = [];
  errors = [];
  vi.spyOn(console, "log").mockImplementation((...args: unknown[]) => {
    logs.push(args.join(" "));
  });
  vi.spyOn(console, "error").mockImplementation((...args: unknown[]) => {
    errors.push(args.join(" "));
  });
});

afterEach(() => {
  vi.restoreAllMocks();
});

function writeStub(dir: string): string {
  const path = join(dir, "scale_finder.json");
  writeFileSync(
    path,
    JSON.stringify({
      tool: "scale_finder",
      learning_rate: 0.01,
      epochs: 3,
      batch_size: 4,
      lora_rank: 4,
      desirable_weight: 1.0,
      undesirable_weight: 3.0,
    }),
    "utf-8",
  );
  return path;
}

describe("tabreason-trainer CLI", () => {
  it("trains an adapter end to end and prints the run log", async () => {
    const dir = tempDir();
    const exportPath = writeJsonl(join(dir, "scale_finder.jsonl"), scaleFinderCorpus(6));
    const stub = writeStub(dir);
    const code = await runCli(["train-it", "--export", exportPath, "--out", join(dir, "out"), "--config", stub]);
    expect(code).toBe(0);
    expect(logs.some((l) => l.startsWith("epoch 3: mean_loss="))).toBe(true);
    expect(logs.some((l) => l.startsWith("artifact: ") && l.endsWith("scale_finder-it.json"))).toBe(true);
  });

  it("runs preference training against a parent and logs class mass", async () => {
    const dir = tempDir();
    const stub = writeStub(dir);
    const itExport = writeJsonl(join(dir, "it.jsonl"), scaleFinderCorpus(6));
    expect(await runCli(["train-it", "--export", itExport, "--out", join(dir, "out"), "--config", stub])).toBe(0);
    logs.length = 0;

    const ktoExport = writeJsonl(join(dir, "kto.jsonl"), labeledCorpus(3, 1));
    const code = await runCli([
      "train-kto",
      "--export",
      ktoExport,
      "--parent",
      join(dir, "out", "scale_finder-it.json"),
      "--out",
      join(dir, "out"),
      "--config",
      stub,
    ]);
    expect(code).toBe(0);
    expect(logs).toContain("class_mass: desirable=3 undesirable=3");
    expect(logs.some((l) => l.endsWith("scale_finder-kto.json"))).toBe(true);
  });

  it("exits 64 on usage problems", async () => {
    expect(await runCli([])).toBe(64);
    expect(await runCli(["train-it"])).toBe(64);
    expect(await runCli(["train-kto", "--export", "x.jsonl"])).toBe(64);
    expect(await runCli(["serve"])).toBe(64);
    expect(await runCli(["serve", "--artifact", "a.json", "--port", "notaport"])).toBe(64);
    expect(await runCli(["frobnicate"])).toBe(64);
    expect(errors.some((l) => l.includes("usage: tabreason-trainer"))).toBe(true);
  });

  it("exits 0 on --help", async () => {
    expect(await runCli(["--help"])).toBe(0);
    expect(logs.some((l) => l.includes("train-kto"))).toBe(true);
  });

  it("exits 2 on domain failures with a named error", async () => {
    const dir = tempDir();
    const empty = join(dir, "empty.jsonl");
    writeFileSync(empty, "", "utf-8");
    expect(await runCli(["train-it", "--export", empty, "--out", dir])).toBe(2);
    expect(errors.some((l) => l.includes("EmptyExportError"))).toBe(true);

    const ktoExport = writeJsonl(join(dir, "kto.jsonl"), labeledCorpus(2, 2));
    const code = await runCli([
      "train-kto",
      "--export",
      ktoExport,
      "--parent",
      join(dir, "missing.json"),
      "--out",
      dir,
    ]);
    expect(code).toBe(2);
    expect(errors.some((l) => l.includes("MissingParentError"))).toBe(true);
  });
});
