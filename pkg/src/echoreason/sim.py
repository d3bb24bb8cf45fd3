"""Simulation harness: synthetic studies, scripted policies, end-to-end runs.

Everything here is deterministic given (seed, config): studies come from a
seeded RNG, policies are pure functions of (kind, seed, study, template), and
reports aggregate in sorted patient order regardless of execution order.
"""

from __future__ import annotations

import hashlib
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .parsing import parse
from .rectify import DEFAULT_THRESHOLD, RectificationContext, TrrTrace, run_trr
from .rewards import (
    DEFAULT_EPSILON,
    OnVerifierError,
    RewardBreakdown,
    RewardConfig,
    Stage,
    score_transcript,
)
from .studies import EchoStudy, Measurement, Video, study_to_dict
from .templates import ReasoningTemplate, retrieve
from .verifiers import (
    Embedder,
    HashedBowEmbedder,
    Judge,
    MockJudge,
    MockScorer,
    RemoteVerifier,
    SimilarityScorer,
)
from .vocab import ViewVocabulary, load_vocabulary

_MEASUREMENT_POOL = (
    ("LVEF", 25.0, 70.0, "%"),
    ("LV end-diastolic diameter", 38.0, 72.0, "mm"),
    ("Interventricular septum thickness", 7.0, 22.0, "mm"),
    ("Left atrial diameter", 28.0, 52.0, "mm"),
    ("RVSP", 18.0, 60.0, "mmHg"),
    ("Aortic valve area", 0.8, 3.5, "cm2"),
    ("E/A ratio", 0.5, 2.5, "ratio"),
)


class PolicyKind(str, Enum):
    FAITHFUL = "faithful"
    DEGENERATE = "degenerate"
    VERBOSE = "verbose"
    UNGROUNDED = "ungrounded"
    WEAK_THEN_CORRECTED = "weak-then-corrected"


@dataclass(frozen=True)
class VerifierSet:
    judge: Judge
    scorer: SimilarityScorer
    embedder: Embedder

    @staticmethod
    def mock(view_vocab: ViewVocabulary | None = None) -> VerifierSet:
        return VerifierSet(
            judge=MockJudge(view_vocab), scorer=MockScorer(), embedder=HashedBowEmbedder()
        )

    @staticmethod
    def remote(client: RemoteVerifier) -> VerifierSet:
        return VerifierSet(judge=client, scorer=client, embedder=client)


def generate_studies(
    seed: int, n_cases: int, templates: Sequence[ReasoningTemplate]
) -> list[EchoStudy]:
    """Synthetic studies cycling through the templates, with balanced Yes/No
    ground truth and probabilistic view dropout to exercise question filtering."""
    if not templates:
        raise ValueError("at least one template is required")
    rng = random.Random(seed)
    studies = []
    for i in range(n_cases):
        template = templates[i % len(templates)]
        patient_id = f"case-{i:04d}"
        kept_views = [v for v in template.meta.views_required if rng.random() < 0.85]
        if not kept_views:
            kept_views = [template.meta.views_required[0]]
        videos = []
        for view in kept_views:
            n_clips = 2 if rng.random() < 0.3 else 1
            for k in range(n_clips):
                videos.append(
                    Video(
                        id=f"{patient_id}-{view.lower()}-{k}",
                        view_label=view,
                        uri=f"synthetic://{patient_id}/{view.lower()}/{k}",
                        caption=_caption_for(template, view),
                    )
                )
        measurements = tuple(
            Measurement(name=name, value=round(rng.uniform(lo, hi), 1), unit=unit)
            for name, lo, hi, unit in rng.sample(_MEASUREMENT_POOL, k=rng.randint(1, 3))
        )
        studies.append(
            EchoStudy(
                patient_id=patient_id,
                videos=tuple(videos),
                measurements=measurements,
                query=f"{template.name}: {', '.join(template.meta.knowledge_tags[:2])}",
                ground_truth="Yes" if i % 2 == 0 else "No",
            )
        )
    return studies


def _caption_for(template: ReasoningTemplate, view: str) -> str:
    """Synthetic ground-truth caption: what this view would show for the
    template's reasoning, derived from the steps that interrogate it."""
    relevant = [
        step
        for step in template.steps
        if any(view in q.required_views for q in step.questions)
    ]
    if not relevant:
        relevant = [template.steps[0]]
    step = relevant[0]
    question = next((q.text for q in step.questions if view in q.required_views), "")
    if not question and step.questions:
        question = step.questions[0].text
    return f"{view} view clip. {step.instruction} {question}".strip()


@dataclass(frozen=True)
class ScriptedPolicy:
    """Deterministic transcript generator with a fixed failure mode."""

    kind: PolicyKind
    seed: int = 0
    epsilon: int = DEFAULT_EPSILON

    def generate(
        self,
        study: EchoStudy,
        template: ReasoningTemplate,
        rectification_context: RectificationContext | None = None,
    ) -> str:
        if self.kind is PolicyKind.FAITHFUL:
            return self._faithful(study, template)
        if self.kind is PolicyKind.DEGENERATE:
            return self._degenerate(study, template)
        if self.kind is PolicyKind.VERBOSE:
            return self._verbose(study, template)
        if self.kind is PolicyKind.UNGROUNDED:
            return self._ungrounded(study, template)
        if rectification_context is None:
            return self._weak(study, template)
        return self._faithful(study, template)

    def _rng(self, study: EchoStudy) -> random.Random:
        return random.Random(f"{self.seed}:{self.kind.value}:{study.patient_id}")

    @staticmethod
    def _answer(study: EchoStudy, correct: bool = True) -> str:
        truth = study.ground_truth or "Yes"
        if correct:
            return truth
        return "No" if truth == "Yes" else "Yes"

    @staticmethod
    def _wrap(steps: Sequence[str], answer: str) -> str:
        body = "\n".join(steps)
        return f"<think>\n{body}\n</think>\n<answer>{answer}</answer>"

    def _faithful(self, study: EchoStudy, template: ReasoningTemplate) -> str:
        available = study.available_views()
        steps = []
        for step in template.steps:
            view = next(
                (v for q in step.questions for v in q.required_views if v in available),
                available[0] if available else template.meta.views_required[0],
            )
            questions = " ".join(q.text for q in step.questions)
            steps.append(
                f"Step {step.index}: On the {view} view I work through: {questions} "
                f"The findings are consistent with the template's expectations."
            )
        return self._wrap(steps, self._answer(study))

    def _degenerate(self, study: EchoStudy, template: ReasoningTemplate) -> str:
        rng = self._rng(study)
        remark = rng.choice(
            (
                "Everything looks fine at a glance.",
                "Nothing stands out on quick review.",
                "Overall impression reached without detailed assessment.",
            )
        )
        return self._wrap([f"Step 1: {remark}"], self._answer(study))

    def _verbose(self, study: EchoStudy, template: ReasoningTemplate) -> str:
        n_steps = template.step_count + self.epsilon + 1
        steps = [
            f"Step {i}: Additional commentary item {i} restating prior observations in detail."
            for i in range(1, n_steps + 1)
        ]
        return self._wrap(steps, self._answer(study))

    def _ungrounded(self, study: EchoStudy, template: ReasoningTemplate) -> str:
        steps = [
            f"Step {step.index}: I reviewed the study broadly; the relevant findings "
            f"appear normal without citing specific imaging."
            for step in template.steps
        ]
        return self._wrap(steps, self._answer(study))

    def _weak(self, study: EchoStudy, template: ReasoningTemplate) -> str:
        steps = [
            f"Step {step.index}: It appears broadly unremarkable." for step in template.steps
        ]
        return self._wrap(steps, self._answer(study, correct=False))


@dataclass(frozen=True)
class CaseResult:
    patient_id: str
    query: str
    template_id: str
    ground_truth: str | None
    prediction: str
    step_count: int
    breakdown: RewardBreakdown
    trr: TrrTrace | None

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "query": self.query,
            "template_id": self.template_id,
            "ground_truth": self.ground_truth,
            "prediction": self.prediction,
            "step_count": self.step_count,
            "rewards": self.breakdown.to_dict(),
            "trr": self.trr.to_dict() if self.trr else None,
        }


@dataclass(frozen=True)
class EvalReport:
    config: dict
    config_digest: str
    cases: tuple[CaseResult, ...]
    accuracy: float
    macro_f1: float
    mean_step_count: float

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "config_digest": self.config_digest,
            "cases": [case.to_dict() for case in self.cases],
            "metrics": {
                "accuracy": self.accuracy,
                "macro_f1": self.macro_f1,
                "mean_step_count": self.mean_step_count,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def compute_metrics(
    cases: Sequence[tuple[str, str | None, str, int]],
) -> dict[str, float]:
    """Accuracy, macro-F1 over disease queries, and mean step count.

    Each case is (prediction, ground_truth, query, step_count). Per-query F1
    treats "Yes" as the positive class; queries with no true or predicted
    positives contribute 0.
    """
    if not cases:
        return {"accuracy": 0.0, "macro_f1": 0.0, "mean_step_count": 0.0}
    correct = sum(1 for pred, truth, _, _ in cases if truth is not None and pred == truth)
    by_query: dict[str, list[tuple[str, str | None]]] = {}
    for pred, truth, query, _ in cases:
        by_query.setdefault(query, []).append((pred, truth))
    f1_values = []
    for group in by_query.values():
        tp = sum(1 for pred, truth in group if pred == "Yes" and truth == "Yes")
        fp = sum(1 for pred, truth in group if pred == "Yes" and truth != "Yes")
        fn = sum(1 for pred, truth in group if pred != "Yes" and truth == "Yes")
        denominator = 2 * tp + fp + fn
        f1_values.append(2 * tp / denominator if denominator else 0.0)
    return {
        "accuracy": correct / len(cases),
        "macro_f1": sum(f1_values) / len(f1_values),
        "mean_step_count": sum(steps for _, _, _, steps in cases) / len(cases),
    }


def run_experiment(
    studies: Sequence[EchoStudy],
    templates: Sequence[ReasoningTemplate],
    policy: ScriptedPolicy,
    verifiers: VerifierSet,
    stage: Stage | str = Stage.STAGE2,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    enable_trr: bool = False,
    epsilon: int = DEFAULT_EPSILON,
    on_verifier_error: OnVerifierError = "fail",
    view_vocab: ViewVocabulary | None = None,
    max_workers: int = 8,
) -> EvalReport:
    """Score every study with the template retrieval picks for its query.

    Cases run in parallel; results aggregate sorted by patient_id, so reports
    are byte-stable however the pool schedules them.
    """
    vocab = view_vocab or load_vocabulary()
    config = RewardConfig.for_stage(stage, epsilon=epsilon, on_verifier_error=on_verifier_error)
    by_id = {t.id: t for t in templates}

    def run_case(study: EchoStudy) -> CaseResult:
        choice = retrieve(study.query, templates, verifiers.embedder)
        template = by_id[choice.template_id]
        trace = None
        if enable_trr:
            trace = run_trr(
                study,
                template,
                verifiers.judge,
                policy,
                threshold,
                view_vocab=vocab,
                on_verifier_error=on_verifier_error,
            )
            raw = (
                trace.round2_transcript
                if trace.round2_transcript is not None
                else trace.round1.transcript
            )
        else:
            raw = policy.generate(study, template, None)
        transcript = parse(raw, vocab)
        breakdown = score_transcript(
            transcript, template, study, verifiers.judge, verifiers.scorer, config
        )
        return CaseResult(
            patient_id=study.patient_id,
            query=study.query,
            template_id=template.id,
            ground_truth=study.ground_truth,
            prediction=trace.final_answer if trace else transcript.answer.value,
            step_count=transcript.step_count,
            breakdown=breakdown,
            trr=trace,
        )

    ordered = sorted(studies, key=lambda s: s.patient_id)
    if max_workers > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run_case, ordered))
    else:
        results = [run_case(study) for study in ordered]

    metrics = compute_metrics(
        [(c.prediction, c.ground_truth, c.query, c.step_count) for c in results]
    )
    config_payload = {
        "policy": policy.kind.value,
        "policy_seed": policy.seed,
        "stage": Stage(stage).value,
        "threshold": threshold,
        "epsilon": epsilon,
        "enable_trr": enable_trr,
        "on_verifier_error": on_verifier_error,
        "n_cases": len(ordered),
        "template_ids": sorted(by_id),
    }
    digest = hashlib.sha256(
        json.dumps(config_payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    return EvalReport(
        config=config_payload,
        config_digest=digest,
        cases=tuple(results),
        accuracy=metrics["accuracy"],
        macro_f1=metrics["macro_f1"],
        mean_step_count=metrics["mean_step_count"],
    )


def studies_to_jsonl(studies: Sequence[EchoStudy]) -> str:
    return "\n".join(
        json.dumps(study_to_dict(s), sort_keys=True, separators=(",", ":")) for s in studies
    )
