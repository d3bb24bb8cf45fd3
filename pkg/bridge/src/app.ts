import type { Server } from "node:http";
import express from "express";
import type { NextFunction, Request, Response } from "express";
import type { ModelBackends } from "./backends.js";
import { deterministicBackends } from "./backends.js";
import type { BridgeConfig } from "./config.js";
import { renderJudgePrompt } from "./prompt.js";
import {
  describeIssues,
  embedRequestSchema,
  judgeRequestSchema,
  similarityRequestSchema,
} from "./schema.js";

/** Admits up to `limit` holders; later acquirers wait their turn. */
class Semaphore {
  private active = 0;
  private readonly queue: Array<() => void> = [];

  constructor(private readonly limit: number) {}

  async acquire(): Promise<void> {
    if (this.active < this.limit) {
      this.active += 1;
      return;
    }
    await new Promise<void>((resolve) => this.queue.push(resolve));
  }

  release(): void {
    const next = this.queue.shift();
    if (next !== undefined) {
      next(); // slot transfers directly to the next waiter
    } else {
      this.active -= 1;
    }
  }
}

/** Runs submitted tasks strictly one after another. */
class SerialQueue {
  private tail: Promise<unknown> = Promise.resolve();

  run<T>(task: () => Promise<T>): Promise<T> {
    const result = this.tail.then(task, task);
    this.tail = result.catch(() => undefined);
    return result;
  }
}

function clampScore(value: number): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new Error("backend produced a non-finite score");
  }
  return Math.min(1, Math.max(0, value));
}

function failureMessage(role: string, modelId: string, err: unknown): string {
  const reason = err instanceof Error ? err.message : String(err);
  return `${role} model ${modelId} failed: ${reason}`;
}

/**
 * Build the express app serving the verifier wire protocol:
 *
 *   POST /v1/judge      {step_text, questions, available_views} -> {score}
 *   POST /v1/similarity {text, view_label, video_uri}           -> {score}
 *   POST /v1/embed      {texts}                                 -> {vectors}
 *   GET  /healthz                                               -> 200
 *
 * Schema violations answer 400; backend failures answer 503. Every served
 * score is clamped to [0, 1]. Requests run concurrently up to
 * config.max_batch, while calls into each model instance are serialized.
 */
export function createApp(config: BridgeConfig, backends: ModelBackends): express.Express {
  const app = express();
  app.use(express.json());

  const limiter = new Semaphore(config.max_batch);
  const judgeQueue = new SerialQueue();
  const similarityQueue = new SerialQueue();
  const embedQueue = new SerialQueue();

  app.use("/v1", (req: Request, res: Response, next: NextFunction) => {
    limiter
      .acquire()
      .then(() => {
        let released = false;
        const release = () => {
          if (!released) {
            released = true;
            limiter.release();
          }
        };
        res.on("finish", release);
        res.on("close", release);
        next();
      })
      .catch(next);
  });

  app.get("/healthz", (_req: Request, res: Response) => {
    res.json({ status: "ok" });
  });

  app.post("/v1/judge", async (req: Request, res: Response) => {
    const parsed = judgeRequestSchema.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: describeIssues(parsed.error) });
      return;
    }
    const { step_text, questions, available_views } = parsed.data;
    const prompt = renderJudgePrompt(step_text, questions, available_views);
    try {
      const raw = await judgeQueue.run(() =>
        backends.judge.score({
          prompt,
          stepText: step_text,
          questions,
          availableViews: available_views,
        }),
      );
      res.json({ score: clampScore(raw) });
    } catch (err) {
      res.status(503).json({ error: failureMessage("judge", backends.judge.modelId, err) });
    }
  });

  app.post("/v1/similarity", async (req: Request, res: Response) => {
    const parsed = similarityRequestSchema.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: describeIssues(parsed.error) });
      return;
    }
    const { text, view_label, video_uri } = parsed.data;
    // Video decoding is out of scope: the URI is treated as a text
    // surrogate for the footage, grounded alongside its view label.
    const reference = `${view_label} ${video_uri}`;
    try {
      const raw = await similarityQueue.run(() => backends.similarity.score(text, reference));
      res.json({ score: clampScore((raw + 1) / 2) });
    } catch (err) {
      res
        .status(503)
        .json({ error: failureMessage("similarity", backends.similarity.modelId, err) });
    }
  });

  app.post("/v1/embed", async (req: Request, res: Response) => {
    const parsed = embedRequestSchema.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: describeIssues(parsed.error) });
      return;
    }
    const { texts } = parsed.data;
    try {
      const vectors = await embedQueue.run(() => backends.embed.embed(texts));
      if (vectors.length !== texts.length) {
        throw new Error(`expected ${texts.length} vectors, backend returned ${vectors.length}`);
      }
      for (const vector of vectors) {
        if (vector.some((x) => typeof x !== "number" || !Number.isFinite(x))) {
          throw new Error("backend produced a non-finite vector component");
        }
      }
      res.json({ vectors });
    } catch (err) {
      res.status(503).json({ error: failureMessage("embed", backends.embed.modelId, err) });
    }
  });

  app.use((_req: Request, res: Response) => {
    res.status(404).json({ error: "not found" });
  });

  // Body-parse failures (invalid JSON) surface here; everything else is a bug.
  app.use((err: unknown, _req: Request, res: Response, _next: NextFunction) => {
    if (err instanceof SyntaxError) {
      res.status(400).json({ error: "request body is not valid JSON" });
      return;
    }
    const reason = err instanceof Error ? err.message : String(err);
    res.status(500).json({ error: reason });
  });

  return app;
}

/** Start the service on config.port; resolves once it is accepting connections. */
export function serve(
  config: BridgeConfig,
  backends: ModelBackends = deterministicBackends(config),
): Promise<Server> {
  const app = createApp(config, backends);
  return new Promise((resolve) => {
    const server = app.listen(config.port, () => resolve(server));
  });
}
