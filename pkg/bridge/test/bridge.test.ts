import { readFileSync, mkdtempSync, writeFileSync } from "node:fs";
import type { Server } from "node:http";
import { tmpdir } from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { serve } from "../src/app.js";
import type { JudgeCall, ModelBackends } from "../src/backends.js";
import { deterministicBackends } from "../src/backends.js";
import { DEFAULT_CONFIG, loadConfig } from "../src/config.js";
import type { BridgeConfig } from "../src/config.js";
import { JUDGE_INSTRUCTIONS, renderJudgePrompt } from "../src/prompt.js";

const WIRE_DIR = fileURLToPath(new URL("../../tests/golden/wire/", import.meta.url));

function loadGolden(name: string): any {
  return JSON.parse(readFileSync(path.join(WIRE_DIR, name), "utf8"));
}

function testConfig(overrides: Partial<BridgeConfig> = {}): BridgeConfig {
  return { ...DEFAULT_CONFIG, port: 0, ...overrides };
}

async function startBridge(
  config: BridgeConfig,
  backends: ModelBackends = deterministicBackends(config),
): Promise<{ baseUrl: string; server: Server }> {
  const server = await serve(config, backends);
  const address = server.address();
  if (typeof address !== "object" || address === null) {
    throw new Error("server did not report a bound port");
  }
  return { baseUrl: `http://127.0.0.1:${address.port}`, server };
}

function closeBridge(server: Server): Promise<void> {
  return new Promise((resolve) => server.close(() => resolve()));
}

async function post(
  baseUrl: string,
  endpoint: string,
  body: unknown,
): Promise<{ status: number; json: any }> {
  const response = await fetch(`${baseUrl}${endpoint}`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
  return { status: response.status, json: await response.json() };
}

describe("golden request replay", () => {
  let baseUrl: string;
  let server: Server;

  beforeAll(async () => {
    ({ baseUrl, server } = await startBridge(testConfig()));
  });

  afterAll(async () => {
    await closeBridge(server);
  });

  it("answers /healthz with 200", async () => {
    const response = await fetch(`${baseUrl}/healthz`);
    expect(response.status).toBe(200);
    expect(await response.json()).toEqual({ status: "ok" });
  });

  it("serves a schema-valid in-range score for the golden judge request", async () => {
    const { status, json } = await post(baseUrl, "/v1/judge", loadGolden("judge_request.json"));
    expect(status).toBe(200);
    expect(Object.keys(json)).toEqual(["score"]);
    expect(typeof json.score).toBe("number");
    expect(json.score).toBeGreaterThanOrEqual(0);
    expect(json.score).toBeLessThanOrEqual(1);
  });

  it("serves a schema-valid in-range score for the golden similarity request", async () => {
    const { status, json } = await post(
      baseUrl,
      "/v1/similarity",
      loadGolden("similarity_request.json"),
    );
    expect(status).toBe(200);
    expect(Object.keys(json)).toEqual(["score"]);
    expect(typeof json.score).toBe("number");
    expect(json.score).toBeGreaterThanOrEqual(0);
    expect(json.score).toBeLessThanOrEqual(1);
  });

  it("serves one finite vector per text for the golden embed request", async () => {
    const request = loadGolden("embed_request.json");
    const { status, json } = await post(baseUrl, "/v1/embed", request);
    expect(status).toBe(200);
    expect(Object.keys(json)).toEqual(["vectors"]);
    expect(Array.isArray(json.vectors)).toBe(true);
    expect(json.vectors).toHaveLength(request.texts.length);
    const dims = new Set(json.vectors.map((v: number[]) => v.length));
    expect(dims.size).toBe(1);
    for (const vector of json.vectors) {
      for (const component of vector) {
        expect(typeof component).toBe("number");
        expect(Number.isFinite(component)).toBe(true);
      }
    }
  });

  it("scores a fully responsive step strictly higher than an empty step", async () => {
    const request = loadGolden("judge_request.json");
    const responsive = await post(baseUrl, "/v1/judge", request);
    const empty = await post(baseUrl, "/v1/judge", { ...request, step_text: "" });
    expect(responsive.status).toBe(200);
    expect(empty.status).toBe(200);
    expect(responsive.json.score).toBeGreaterThan(empty.json.score);
  });

  it("embeds identical texts to identical vectors", async () => {
    const { status, json } = await post(baseUrl, "/v1/embed", { texts: ["a", "a"] });
    expect(status).toBe(200);
    expect(json.vectors).toHaveLength(2);
    expect(json.vectors[0]).toEqual(json.vectors[1]);
  });

  it("ranks caption-style text at least as similar as unrelated text", async () => {
    const grounded = await post(baseUrl, "/v1/similarity", {
      text: "PLAX synthetic://plax/alpha",
      view_label: "PLAX",
      video_uri: "synthetic://plax/alpha",
    });
    const captionStyle = await post(baseUrl, "/v1/similarity", {
      text: "plax clip alpha",
      view_label: "PLAX",
      video_uri: "synthetic://plax/alpha",
    });
    const unrelated = await post(baseUrl, "/v1/similarity", {
      text: "unrelated gibberish zzqx",
      view_label: "PLAX",
      video_uri: "synthetic://plax/alpha",
    });
    for (const result of [grounded, captionStyle, unrelated]) {
      expect(result.status).toBe(200);
      expect(result.json.score).toBeGreaterThanOrEqual(0);
      expect(result.json.score).toBeLessThanOrEqual(1);
    }
    expect(grounded.json.score).toBeGreaterThanOrEqual(unrelated.json.score);
    expect(captionStyle.json.score).toBeGreaterThanOrEqual(unrelated.json.score);
  });

  it("is deterministic across repeated identical calls", async () => {
    const request = loadGolden("judge_request.json");
    const first = await post(baseUrl, "/v1/judge", request);
    const second = await post(baseUrl, "/v1/judge", request);
    expect(second.json).toEqual(first.json);
  });

  it("rejects every recorded malformed request with 400", async () => {
    const cases = loadGolden("malformed_requests.json");
    expect(cases.length).toBeGreaterThanOrEqual(10);
    for (const { endpoint, payload, note } of cases) {
      const { status, json } = await post(baseUrl, endpoint, payload);
      expect(status, note).toBe(400);
      expect(typeof json.error, note).toBe("string");
    }
  });

  it("rejects a body that is not JSON with 400", async () => {
    const response = await fetch(`${baseUrl}/v1/judge`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: "{not json",
    });
    expect(response.status).toBe(400);
    const json = await response.json();
    expect(typeof json.error).toBe("string");
  });

  it("answers unknown routes with a JSON 404", async () => {
    const { status, json } = await post(baseUrl, "/v1/nonsense", {});
    expect(status).toBe(404);
    expect(json).toEqual({ error: "not found" });
  });
});

describe("backend failure handling", () => {
  function failingBackends(): ModelBackends {
    return {
      judge: {
        modelId: "broken-judge",
        score: async () => {
          throw new Error("weights not loaded");
        },
      },
      similarity: {
        modelId: "broken-similarity",
        score: async () => {
          throw new Error("weights not loaded");
        },
      },
      embed: {
        modelId: "broken-embed",
        embed: async () => {
          throw new Error("weights not loaded");
        },
      },
    };
  }

  it("answers 503 when a model call fails", async () => {
    const { baseUrl, server } = await startBridge(testConfig(), failingBackends());
    try {
      for (const [endpoint, file] of [
        ["/v1/judge", "judge_request.json"],
        ["/v1/similarity", "similarity_request.json"],
        ["/v1/embed", "embed_request.json"],
      ] as const) {
        const { status, json } = await post(baseUrl, endpoint, loadGolden(file));
        expect(status, endpoint).toBe(503);
        expect(json.error, endpoint).toContain("weights not loaded");
      }
    } finally {
      await closeBridge(server);
    }
  });

  it("answers 503 when the judge returns a non-finite score", async () => {
    const backends = deterministicBackends(testConfig());
    backends.judge = { modelId: "nan-judge", score: async () => Number.NaN };
    const { baseUrl, server } = await startBridge(testConfig(), backends);
    try {
      const { status } = await post(baseUrl, "/v1/judge", loadGolden("judge_request.json"));
      expect(status).toBe(503);
    } finally {
      await closeBridge(server);
    }
  });

  it("answers 503 when the embed backend miscounts vectors", async () => {
    const backends = deterministicBackends(testConfig());
    backends.embed = { modelId: "short-embed", embed: async () => [[1, 0]] };
    const { baseUrl, server } = await startBridge(testConfig(), backends);
    try {
      const { status, json } = await post(baseUrl, "/v1/embed", { texts: ["a", "b"] });
      expect(status).toBe(503);
      expect(json.error).toContain("expected 2 vectors");
    } finally {
      await closeBridge(server);
    }
  });
});

describe("score clamping", () => {
  it("clamps out-of-range backend scores into [0, 1]", async () => {
    const backends = deterministicBackends(testConfig());
    let judgeScore = 1.7;
    backends.judge = { modelId: "wild-judge", score: async () => judgeScore };
    backends.similarity = { modelId: "wild-similarity", score: async () => 5 };
    const { baseUrl, server } = await startBridge(testConfig(), backends);
    try {
      const high = await post(baseUrl, "/v1/judge", loadGolden("judge_request.json"));
      expect(high.json).toEqual({ score: 1 });
      judgeScore = -0.2;
      const low = await post(baseUrl, "/v1/judge", loadGolden("judge_request.json"));
      expect(low.json).toEqual({ score: 0 });
      const similarity = await post(
        baseUrl,
        "/v1/similarity",
        loadGolden("similarity_request.json"),
      );
      expect(similarity.json).toEqual({ score: 1 });
    } finally {
      await closeBridge(server);
    }
  });
});

describe("judge prompt", () => {
  it("sends the full instruction block with questions and views injected", async () => {
    const prompts: string[] = [];
    const backends = deterministicBackends(testConfig());
    backends.judge = {
      modelId: "recording-judge",
      score: async (call: JudgeCall) => {
        prompts.push(call.prompt);
        return 0.5;
      },
    };
    const { baseUrl, server } = await startBridge(testConfig(), backends);
    try {
      await post(baseUrl, "/v1/judge", loadGolden("judge_request.json"));
    } finally {
      await closeBridge(server);
    }
    expect(prompts).toHaveLength(1);
    const prompt = prompts[0];
    expect(prompt.startsWith(JUDGE_INSTRUCTIONS)).toBe(true);
    expect(prompt).toContain("Provide a score between 0 and 1");
    expect(prompt).toContain("evaluate the response based on its accuracy");
    expect(prompt).toContain("/no_think");
    expect(prompt).toContain("1. Is the PLAX view consistent?");
    expect(prompt).toContain("- PLAX");
    expect(prompt).toContain("PLAX view is consistent.");
  });

  it("renders an explicit placeholder when no views are available", () => {
    const prompt = renderJudgePrompt("step", ["q?"], []);
    expect(prompt).toContain("(none)");
  });
});

describe("concurrency", () => {
  it("serializes calls into a single model instance", async () => {
    let active = 0;
    let maxActive = 0;
    const backends = deterministicBackends(testConfig());
    backends.judge = {
      modelId: "slow-judge",
      score: async () => {
        active += 1;
        maxActive = Math.max(maxActive, active);
        await new Promise((resolve) => setTimeout(resolve, 5));
        active -= 1;
        return 0.5;
      },
    };
    const { baseUrl, server } = await startBridge(testConfig(), backends);
    try {
      const request = loadGolden("judge_request.json");
      const results = await Promise.all(
        Array.from({ length: 6 }, () => post(baseUrl, "/v1/judge", request)),
      );
      for (const { status } of results) {
        expect(status).toBe(200);
      }
    } finally {
      await closeBridge(server);
    }
    expect(maxActive).toBe(1);
  });

  it("admits at most max_batch requests at a time, queueing the rest", async () => {
    let active = 0;
    let maxActive = 0;
    const track = async <T>(value: T): Promise<T> => {
      active += 1;
      maxActive = Math.max(maxActive, active);
      await new Promise((resolve) => setTimeout(resolve, 5));
      active -= 1;
      return value;
    };
    const backends: ModelBackends = {
      judge: { modelId: "j", score: () => track(0.5) },
      similarity: { modelId: "s", score: () => track(0.5) },
      embed: { modelId: "e", embed: (texts) => track(texts.map(() => [0, 1])) },
    };
    const { baseUrl, server } = await startBridge(testConfig({ max_batch: 1 }), backends);
    try {
      const results = await Promise.all([
        post(baseUrl, "/v1/judge", loadGolden("judge_request.json")),
        post(baseUrl, "/v1/similarity", loadGolden("similarity_request.json")),
        post(baseUrl, "/v1/embed", loadGolden("embed_request.json")),
      ]);
      for (const { status } of results) {
        expect(status).toBe(200);
      }
    } finally {
      await closeBridge(server);
    }
    expect(maxActive).toBe(1);
  });
});

describe("configuration", () => {
  it("returns the defaults when no file is given", () => {
    expect(loadConfig()).toEqual(DEFAULT_CONFIG);
  });

  it("merges a partial file over the defaults", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "bridge-config-"));
    const file = path.join(dir, "config.json");
    writeFileSync(file, JSON.stringify({ judge_model_id: "custom-judge", max_batch: 3 }));
    const config = loadConfig(file);
    expect(config.judge_model_id).toBe("custom-judge");
    expect(config.max_batch).toBe(3);
    expect(config.embed_model_id).toBe(DEFAULT_CONFIG.embed_model_id);
    expect(config.score_clamp).toBe(true);
  });

  it("rejects a config that tries to disable score clamping", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "bridge-config-"));
    const file = path.join(dir, "config.json");
    writeFileSync(file, JSON.stringify({ score_clamp: false }));
    expect(() => loadConfig(file)).toThrow(/score_clamp/);
  });

  it("rejects unknown config fields", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "bridge-config-"));
    const file = path.join(dir, "config.json");
    writeFileSync(file, JSON.stringify({ batch: 3 }));
    expect(() => loadConfig(file)).toThrow(/batch/);
  });

  it("rejects a missing config file", () => {
    expect(() => loadConfig("/nonexistent/config.json")).toThrow(/could not read/);
  });
});
