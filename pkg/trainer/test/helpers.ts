/** Shared fixtures: synthetic exports in the upstream JSONL shapes. */

import { mkdirSync, mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";

export interface Line {
  tool: string;
  prompt: string;
  completion: string;
  id: string;
  template_version?: number;
  label?: 1 | -1;
}

export function tempDir(prefix = "trainer-test-"): string {
  return mkdtempSync(join(tmpdir(), prefix));
}

export function writeJsonl(path: string, lines: Line[]): string {
  mkdirSync(dirname(path), { recursive: true });
  writeFileSync(path, lines.map((l) => JSON.stringify(l)).join("\n") + "\n", "utf-8");
  return path;
}

const SCALES = ["thousand", "million", "billion", "percent", ""];

/**
 * Synthetic scale-finder pairs in the exact export line shape: prompts show
 * a small table and question, completions name the unit the way the
 * pipeline reconstructs them.
 */
export function scaleFinderCorpus(n: number): Line[] {
  const out: Line[] = [];
  for (let i = 0; i < n; i++) {
    const scale = SCALES[i % SCALES.length];
    const prompt =
      "Read the table and question, then name the unit scale of the answer.\n\n" +
      "TABLE:\n" +
      `metric | ${2015 + (i % 5)}\n` +
      `revenue | ${1200 + 7 * i}\n` +
      `cost | ${800 + 3 * i}\n\n` +
      "QUESTION:\n" +
      `What was line item ${i} reported in?\n\n` +
      "Allowed scales: 'thousand', 'million', 'billion', 'percent', ''.";
    out.push({
      tool: "Scale_Finder",
      prompt,
      completion: `SCALE: '${scale}'`,
      id: `syn-${String(i).padStart(3, "0")}`,
      template_version: 1,
    });
  }
  return out;
}

/** Same pairs with labels attached, n positive then the rest negative. */
export function labeledCorpus(nPos: number, nNeg: number): Line[] {
  const lines = scaleFinderCorpus(nPos + nNeg);
  return lines.map((line, i) => ({ ...line, label: i < nPos ? 1 : (-1 as const) }));
}
