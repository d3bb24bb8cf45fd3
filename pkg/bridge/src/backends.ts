import type { BridgeConfig } from "./config.js";

/** Everything the service hands a judge model for one scoring call. */
export interface JudgeCall {
  /** Fully rendered prompt; a hosted model receives exactly this string. */
  prompt: string;
  stepText: string;
  questions: readonly string[];
  availableViews: readonly string[];
}

/**
 * The three model roles behind the service. A backend may call out to a
 * hosted model; the bundled implementations below are deterministic local
 * stand-ins so the service runs without model weights. Contract per role:
 *
 * - judge: score in [0, 1] (the service clamps defensively regardless).
 * - similarity: raw similarity in [-1, 1]; the service owns the affine
 *   (x + 1) / 2 mapping into [0, 1].
 * - embed: one vector per input text, all of equal dimension.
 */
export interface ModelBackends {
  judge: {
    modelId: string;
    score(call: JudgeCall): Promise<number>;
  };
  similarity: {
    modelId: string;
    score(text: string, reference: string): Promise<number>;
  };
  embed: {
    modelId: string;
    embed(texts: readonly string[]): Promise<number[][]>;
  };
}

const EMBED_DIM = 256;
const FNV_OFFSET = 14695981039346656037n;
const FNV_PRIME = 1099511628211n;
const MASK_64 = 0xffffffffffffffffn;

function tokens(text: string): string[] {
  return text.toLowerCase().match(/[a-z0-9]+/g) ?? [];
}

function fnv1a64(token: string): bigint {
  let hash = FNV_OFFSET;
  for (const byte of Buffer.from(token, "utf8")) {
    hash = ((hash ^ BigInt(byte)) * FNV_PRIME) & MASK_64;
  }
  return hash;
}

/** Hashed bag-of-words embedding: token counts folded into EMBED_DIM
 *  buckets by FNV-1a, L2-normalized; no tokens yields the zero vector. */
function embedText(text: string): number[] {
  const vector = new Array<number>(EMBED_DIM).fill(0);
  for (const token of tokens(text)) {
    vector[Number(fnv1a64(token) % BigInt(EMBED_DIM))] += 1;
  }
  const norm = Math.sqrt(vector.reduce((acc, x) => acc + x * x, 0));
  return norm > 0 ? vector.map((x) => x / norm) : vector;
}

function cosine(a: readonly number[], b: readonly number[]): number {
  let dot = 0;
  for (let i = 0; i < a.length; i += 1) {
    dot += a[i] * b[i];
  }
  return dot;
}

/** Mean over questions of the fraction of a question's tokens that the
 *  step text covers; 0 when the step has no tokens at all. */
function lexicalJudgeScore(stepText: string, questions: readonly string[]): number {
  const stepTokens = new Set(tokens(stepText));
  if (stepTokens.size === 0 || questions.length === 0) {
    return 0;
  }
  let total = 0;
  for (const question of questions) {
    const questionTokens = tokens(question);
    if (questionTokens.length === 0) {
      continue;
    }
    const covered = questionTokens.filter((t) => stepTokens.has(t)).length;
    total += covered / questionTokens.length;
  }
  return total / questions.length;
}

/**
 * Deterministic local backends. These stand in for hosted models — an
 * instruction-following judge, a text-video similarity model, an embedding
 * model — so the service can run, and be tested, on any machine. Any
 * backend honoring the ModelBackends contract can be swapped in; the
 * substitution is deliberate and visible in the model ids.
 */
export function deterministicBackends(config: BridgeConfig): ModelBackends {
  return {
    judge: {
      modelId: config.judge_model_id,
      async score(call: JudgeCall): Promise<number> {
        return lexicalJudgeScore(call.stepText, call.questions);
      },
    },
    similarity: {
      modelId: config.similarity_model_id,
      async score(text: string, reference: string): Promise<number> {
        return cosine(embedText(text), embedText(reference));
      },
    },
    embed: {
      modelId: config.embed_model_id,
      async embed(texts: readonly string[]): Promise<number[][]> {
        return texts.map(embedText);
      },
    },
  };
}
