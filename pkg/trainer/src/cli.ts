#!/usr/bin/env node
/**
 * Command line for the adapter trainer.
 *
 * Usage:
 *   tabreason-trainer train-it  --export scale_finder.jsonl --out adapters/
 *   tabreason-trainer train-kto --export scale_finder.jsonl --parent adapters/scale_finder-it.json --out adapters/
 *   tabreason-trainer serve     --artifact adapters/scale_finder-it.json --port 8080
 *
 * train-it / train-kto read hyperparameters from --config (a configs/<tool>.json
 * stub written by the extraction pipeline) and fall back to stock defaults.
 * serve registers every --artifact under its artifact name; --alias adds
 * extra serving names, e.g. --alias base=scale_finder-it.
 */

import { realpathSync } from "node:fs";
import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";

import { readTrainingConfig, TrainingConfig } from "./data.js";
import { trainIt, trainKto, RunLog } from "./train.js";
import { createApp, listen, registryFromArtifacts } from "./serve.js";
import { ConfigError, EmptyExportError, LoadError, MissingParentError } from "./errors.js";

const USAGE = `usage: tabreason-trainer <command> [options]

commands:
  train-it   --export <jsonl> --out <dir> [--base <id>] [--config <stub>] [--name <name>]
  train-kto  --export <jsonl> --parent <metadata> --out <dir> [--config <stub>] [--name <name>] [--allow-degenerate]
  serve      --artifact <metadata> [--artifact ...] [--alias <name>=<artifact>] [--port <n>]`;

const USAGE_EXIT = 64;

function fail(message: string): number {
  console.error(`tabreason-trainer: error: ${message}`);
  console.error(USAGE);
  return USAGE_EXIT;
}

function loadConfig(path: string | undefined): Partial<TrainingConfig> | undefined {
  return path === undefined ? undefined : readTrainingConfig(path);
}

function printRunLog(log: RunLog, metadataPath: string): void {
  console.log(`stage: ${log.stage}`);
  console.log(`tool: ${log.tool}`);
  console.log(`examples: ${log.examples}`);
  for (const entry of log.epochs) {
    console.log(`epoch ${entry.epoch}: mean_loss=${entry.meanLoss.toFixed(6)}`);
  }
  if (log.classMass) {
    console.log(
      `class_mass: desirable=${log.classMass.desirable} undesirable=${log.classMass.undesirable}`,
    );
  }
  console.log(`artifact: ${metadataPath}`);
}

function cmdTrainIt(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      export: { type: "string" },
      out: { type: "string" },
      base: { type: "string" },
      config: { type: "string" },
      name: { type: "string" },
    },
  });
  if (!values.export || !values.out) return fail("train-it requires --export and --out");
  const result = trainIt(values.export, {
    outDir: values.out,
    base: values.base,
    config: loadConfig(values.config),
    name: values.name,
  });
  printRunLog(result.log, result.metadataPath);
  return 0;
}

function cmdTrainKto(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      export: { type: "string" },
      parent: { type: "string" },
      out: { type: "string" },
      config: { type: "string" },
      name: { type: "string" },
      "allow-degenerate": { type: "boolean", default: false },
    },
  });
  if (!values.export || !values.parent || !values.out) {
    return fail("train-kto requires --export, --parent, and --out");
  }
  const result = trainKto(values.export, values.parent, {
    outDir: values.out,
    config: loadConfig(values.config),
    name: values.name,
    acknowledgeDegenerate: values["allow-degenerate"],
  });
  printRunLog(result.log, result.metadataPath);
  return 0;
}

async function cmdServe(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      artifact: { type: "string", multiple: true },
      alias: { type: "string", multiple: true },
      port: { type: "string", default: "8080" },
    },
  });
  const artifacts = values.artifact ?? [];
  if (artifacts.length === 0) return fail("serve requires at least one --artifact");
  const port = Number(values.port);
  if (!Number.isInteger(port) || port < 0 || port > 65535) {
    return fail(`invalid port: ${values.port}`);
  }

  const { registry } = registryFromArtifacts(artifacts);
  for (const spec of values.alias ?? []) {
    const eq = spec.indexOf("=");
    if (eq <= 0) return fail(`--alias expects <name>=<artifact>, got ${spec}`);
    const aliasName = spec.slice(0, eq);
    const target = spec.slice(eq + 1);
    const lm = registry.get(target);
    if (!lm) return fail(`--alias target '${target}' is not a loaded artifact name`);
    registry.set(aliasName, lm);
  }

  const bound = await listen(createApp(registry), port);
  console.log(`serving ${registry.size} model name(s) on http://127.0.0.1:${bound.port}`);
  for (const name of [...registry.keys()].sort()) console.log(`  ${name}`);
  return 0; // the listening socket keeps the process alive
}

export async function runCli(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case "train-it":
        return cmdTrainIt(rest);
      case "train-kto":
        return cmdTrainKto(rest);
      case "serve":
        return await cmdServe(rest);
      case undefined:
      case "--help":
      case "-h":
        console.log(USAGE);
        return command === undefined ? USAGE_EXIT : 0;
      default:
        return fail(`unknown command: ${command}`);
    }
  } catch (err) {
    if (err instanceof RangeError || (err as NodeJS.ErrnoException).code === "ERR_PARSE_ARGS_UNKNOWN_OPTION") {
      return fail((err as Error).message);
    }
    if (
      err instanceof EmptyExportError ||
      err instanceof ConfigError ||
      err instanceof MissingParentError ||
      err instanceof LoadError
    ) {
      console.error(`tabreason-trainer: ${err.name}: ${err.message}`);
      return 2;
    }
    console.error(`tabreason-trainer: ${(err as Error).stack ?? err}`);
    return 1;
  }
}

function invokedDirectly(): boolean {
  if (process.argv[1] === undefined) return false;
  try {
    return import.meta.url === pathToFileURL(realpathSync(process.argv[1])).href;
  } catch {
    return false;
  }
}

if (invokedDirectly()) {
  runCli(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
