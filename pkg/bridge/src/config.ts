import { readFileSync } from "node:fs";
import { z } from "zod";

/**
 * Runtime configuration for the bridge service.
 *
 * The three model ids name the backends that answer each endpoint; with the
 * bundled deterministic backends they are labels only, but a deployment that
 * swaps in hosted models uses them to select checkpoints. `max_batch` bounds
 * how many requests the service processes concurrently; calls into a single
 * model instance are always serialized regardless. `score_clamp` is fixed
 * true: every served score is clamped to [0, 1] and this cannot be disabled.
 */
export interface BridgeConfig {
  judge_model_id: string;
  embed_model_id: string;
  similarity_model_id: string;
  port: number;
  max_batch: number;
  score_clamp: true;
}

export const DEFAULT_CONFIG: BridgeConfig = {
  judge_model_id: "lexical-judge-v1",
  embed_model_id: "hashed-bow-v1",
  similarity_model_id: "hashed-bow-cosine-v1",
  port: 8711,
  max_batch: 8,
  score_clamp: true,
};

const configSchema = z
  .object({
    judge_model_id: z.string().min(1),
    embed_model_id: z.string().min(1),
    similarity_model_id: z.string().min(1),
    port: z.number().int().min(0).max(65535),
    max_batch: z.number().int().min(1),
    score_clamp: z.literal(true),
  })
  .strict();

/**
 * Load configuration from a JSON file, falling back to defaults for any
 * field the file omits. Without a path the defaults are returned as-is.
 * Unknown fields and `score_clamp: false` are rejected.
 */
export function loadConfig(path?: string): BridgeConfig {
  if (path === undefined) {
    return { ...DEFAULT_CONFIG };
  }
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, "utf8"));
  } catch (err) {
    throw new Error(`could not read config file ${path}: ${String(err)}`);
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new Error(`config file ${path} must contain a JSON object`);
  }
  const merged = { ...DEFAULT_CONFIG, ...(raw as Record<string, unknown>) };
  const parsed = configSchema.safeParse(merged);
  if (!parsed.success) {
    const issue = parsed.error.issues[0];
    const where = issue.path.length > 0 ? issue.path.join(".") : "config";
    throw new Error(`invalid config ${path}: ${where}: ${issue.message}`);
  }
  return parsed.data;
}
