/**
 * Chat-completions serving for trained adapters.
 *
 * The endpoint speaks the ubiquitous wire shape: POST /v1/chat/completions
 * with {model, messages, temperature, max_tokens, stop}; the model name
 * selects which adapter answers. Completions come from the same decode path
 * used in-process, so a served answer always matches a direct one.
 */

import { createHash } from "node:crypto";
import type { Server } from "node:http";

import express from "express";

import { CharLm, DecodeResult } from "./model.js";
import { LoadedAdapter, loadArtifact } from "./artifact.js";

export interface ServableModel {
  name: string;
  lm: CharLm;
}

/** Registry of serving name -> model. Aliases may point at the same adapter. */
export type ModelRegistry = Map<string, CharLm>;

export function registryOf(entries: Iterable<ServableModel>): ModelRegistry {
  const registry: ModelRegistry = new Map();
  for (const entry of entries) registry.set(entry.name, entry.lm);
  return registry;
}

/** Load artifacts from metadata paths and register each under its own name. */
export function registryFromArtifacts(metadataPaths: string[]): { registry: ModelRegistry; loaded: LoadedAdapter[] } {
  const loaded = metadataPaths.map((p) => loadArtifact(p));
  const registry = registryOf(loaded.map((l) => ({ name: l.artifact.name, lm: l.lm })));
  return { registry, loaded };
}

interface ChatMessage {
  role: string;
  content: string;
}

function errorBody(message: string, code?: string): object {
  return { error: { message, type: "invalid_request_error", ...(code ? { code } : {}) } };
}

function extractMessages(raw: unknown): ChatMessage[] | null {
  if (!Array.isArray(raw) || raw.length === 0) return null;
  const out: ChatMessage[] = [];
  for (const item of raw) {
    if (typeof item !== "object" || item === null) return null;
    const { role, content } = item as Record<string, unknown>;
    if (typeof role !== "string" || typeof content !== "string") return null;
    out.push({ role, content });
  }
  return out;
}

function normalizeStop(raw: unknown): string[] {
  if (typeof raw === "string") return [raw];
  if (Array.isArray(raw)) return raw.filter((s): s is string => typeof s === "string");
  return [];
}

export function createApp(registry: ModelRegistry): express.Express {
  const app = express();
  app.use(express.json({ limit: "8mb" })); // planner prompts carry whole tables

  app.post("/v1/chat/completions", (req, res) => {
    const body = req.body as Record<string, unknown>;
    const modelName = body.model;
    if (typeof modelName !== "string" || modelName.length === 0) {
      res.status(400).json(errorBody("request is missing a model name"));
      return;
    }
    const lm = registry.get(modelName);
    if (!lm) {
      res.status(404).json(errorBody(`model '${modelName}' not found`, "model_not_found"));
      return;
    }
    const messages = extractMessages(body.messages);
    if (!messages) {
      res.status(400).json(errorBody("messages must be a non-empty list of {role, content}"));
      return;
    }
    const temperature = typeof body.temperature === "number" ? body.temperature : 0;
    const maxTokens = typeof body.max_tokens === "number" && body.max_tokens > 0 ? body.max_tokens : 256;
    const stop = normalizeStop(body.stop);

    const prompt = messages.map((m) => m.content).join("\n");
    const result: DecodeResult = lm.decode(prompt, { maxTokens, stop, temperature });

    const id = "chatcmpl-" + createHash("sha256").update(`${modelName}\n${prompt}`).digest("hex").slice(0, 24);
    res.json({
      id,
      object: "chat.completion",
      model: modelName,
      choices: [
        {
          index: 0,
          message: { role: "assistant", content: result.text },
          finish_reason: result.finishReason,
        },
      ],
      usage: {
        prompt_tokens: prompt.length,
        completion_tokens: result.text.length,
        total_tokens: prompt.length + result.text.length,
      },
    });
  });

  app.get("/v1/models", (_req, res) => {
    res.json({
      object: "list",
      data: [...registry.keys()].sort().map((name) => ({ id: name, object: "model" })),
    });
  });

  return app;
}

/** Bind on an ephemeral (or named) port; resolves once accepting connections. */
export function listen(app: express.Express, port = 0): Promise<{ server: Server; port: number }> {
  return new Promise((resolvePromise, reject) => {
    const server = app.listen(port, "127.0.0.1", () => {
      const addr = server.address();
      if (addr === null || typeof addr === "string") {
        reject(new Error("server bound without a usable address"));
        return;
      }
      resolvePromise({ server, port: addr.port });
    });
    server.on("error", reject);
  });
}
