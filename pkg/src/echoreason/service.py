"""HTTP service exposing the scoring engine and the mock verifier endpoints.

The /v1/* routes implement the verifier wire protocol with the deterministic
mocks, so the service doubles as a drop-in verifier backend for remote-mode
clients. Scoring, retrieval, GRPO evaluation, TRR, and simulation runs are
thin wrappers over the library; all responses are plain JSON.

The in-service similarity mock grounds on the video's view label and URI
(captions never cross the wire); the in-process mock used by local scoring
grounds on captions directly.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .errors import PolicyError, SchemaError, TemplateError, VerifierError
from .grpo import evaluate_objective, group_from_dict
from .parsing import parse
from .rectify import DEFAULT_THRESHOLD, run_trr
from .rewards import DEFAULT_EPSILON, RewardConfig, score_transcript
from .sim import PolicyKind, ScriptedPolicy, VerifierSet, generate_studies, run_experiment
from .studies import study_from_dict
from .templates import ReasoningTemplate, bundled_template_dir, load_templates, retrieve
from .verifiers import (
    EmbedRequest,
    HashedBowEmbedder,
    JudgeRequest,
    MockJudge,
    SimilarityRequest,
    content_tokens,
    jaccard,
)
from .vocab import load_vocabulary


class RetrieveRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    query: str


class ScoreRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    study: dict
    transcript: str
    template_id: str | None = None
    stage: Literal["stage1", "stage2"] = "stage2"
    epsilon: int = Field(default=DEFAULT_EPSILON, ge=0)
    on_verifier_error: Literal["fail", "zero"] = "fail"


class PolicySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["faithful", "degenerate", "verbose", "ungrounded", "weak-then-corrected"]
    seed: int = 0


class TrrRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    study: dict
    policy: PolicySpec
    template_id: str | None = None
    threshold: float = Field(default=DEFAULT_THRESHOLD, ge=0.0, le=1.0)


class SimRunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 1
    n_cases: int = Field(default=50, ge=0)
    policy: Literal[
        "faithful", "degenerate", "verbose", "ungrounded", "weak-then-corrected"
    ] = "faithful"
    policy_seed: int = 0
    stage: Literal["stage1", "stage2"] = "stage2"
    threshold: float = Field(default=DEFAULT_THRESHOLD, ge=0.0, le=1.0)
    epsilon: int = Field(default=DEFAULT_EPSILON, ge=0)
    enable_trr: bool = False


def create_app(template_dir: str | Path | None = None) -> FastAPI:
    vocab = load_vocabulary()
    templates = load_templates(template_dir or bundled_template_dir(), vocab)
    by_id = {t.id: t for t in templates}
    judge = MockJudge(vocab)
    embedder = HashedBowEmbedder()
    verifiers = VerifierSet.mock(vocab)

    app = FastAPI(title="echoreason", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(SchemaError)
    @app.exception_handler(TemplateError)
    @app.exception_handler(VerifierError)
    @app.exception_handler(PolicyError)
    async def on_domain_error(request: Request, exc: Exception):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    def pick_template(template_id: str | None, query: str | None) -> ReasoningTemplate:
        if template_id is not None:
            if template_id not in by_id:
                raise SchemaError(f"unknown template id {template_id!r}")
            return by_id[template_id]
        if not query:
            raise SchemaError("either template_id or a study query is required")
        return by_id[retrieve(query, templates, embedder).template_id]

    @app.get("/healthz")
    async def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/v1/judge")
    async def judge_step(request: JudgeRequest) -> dict:
        score = judge.judge(request.step_text, request.questions, request.available_views)
        return {"score": score}

    @app.post("/v1/similarity")
    async def similarity(request: SimilarityRequest) -> dict:
        reference = content_tokens(f"{request.view_label} {request.video_uri}")
        return {"score": jaccard(content_tokens(request.text), reference)}

    @app.post("/v1/embed")
    async def embed(request: EmbedRequest) -> dict:
        return {"vectors": embedder.embed(request.texts)}

    @app.post("/retrieve")
    async def retrieve_template(request: RetrieveRequest) -> dict:
        result = retrieve(request.query, templates, embedder)
        return {
            "template_id": result.template_id,
            "similarity": result.similarity,
            "ranked_rest": [
                {"template_id": r.template_id, "similarity": r.similarity}
                for r in result.ranked_rest
            ],
        }

    @app.post("/score")
    async def score(request: ScoreRequest) -> dict:
        study = study_from_dict(request.study, source="request.study")
        template = pick_template(request.template_id, study.query)
        config = RewardConfig.for_stage(
            request.stage, epsilon=request.epsilon, on_verifier_error=request.on_verifier_error
        )
        transcript = parse(request.transcript, vocab)
        breakdown = score_transcript(
            transcript, template, study, verifiers.judge, verifiers.scorer, config
        )
        return {"template_id": template.id, "rewards": breakdown.to_dict()}

    @app.post("/grpo/evaluate")
    async def grpo_evaluate(payload: dict) -> dict:
        group = group_from_dict(payload, source="request")
        return evaluate_objective(group).to_dict()

    @app.post("/trr")
    async def trr(request: TrrRequest) -> dict:
        study = study_from_dict(request.study, source="request.study")
        template = pick_template(request.template_id, study.query)
        policy = ScriptedPolicy(kind=PolicyKind(request.policy.kind), seed=request.policy.seed)
        trace = run_trr(
            study, template, verifiers.judge, policy, request.threshold, view_vocab=vocab
        )
        return {"template_id": template.id, "trace": trace.to_dict()}

    @app.post("/sim/run")
    async def sim_run(request: SimRunRequest) -> dict:
        studies = generate_studies(request.seed, request.n_cases, templates)
        policy = ScriptedPolicy(
            kind=PolicyKind(request.policy), seed=request.policy_seed, epsilon=request.epsilon
        )
        report = run_experiment(
            studies,
            templates,
            policy,
            verifiers,
            stage=request.stage,
            threshold=request.threshold,
            enable_trr=request.enable_trr,
            epsilon=request.epsilon,
        )
        return report.to_dict()

    return app
