"""Reward engine: the five transcript rewards and their staged combination.

Rewards are computed against a view-filtered template and the study that
produced the transcript. All verifier access goes through the judge/scorer
protocols so the engine itself stays deterministic and I/O-free.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Literal

from .errors import InvalidTemplate, VerifierError
from .parsing import Answer, Transcript
from .studies import EchoStudy
from .templates import ReasoningTemplate, filter_questions
from .verifiers import Judge, SimilarityScorer

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 5

OnVerifierError = Literal["fail", "zero"]


class Stage(str, Enum):
    """Training curriculum stages with different reward mixes."""

    STAGE1 = "stage1"
    STAGE2 = "stage2"


@dataclass(frozen=True)
class RewardWeights:
    format: float
    acc: float
    pqtr: float
    pqlr: float
    esr: float

    def to_dict(self) -> dict:
        return {
            "format": self.format,
            "acc": self.acc,
            "pqtr": self.pqtr,
            "pqlr": self.pqlr,
            "esr": self.esr,
        }


@dataclass(frozen=True)
class StageConfig:
    stage: Stage
    weights: RewardWeights
    kl_beta: float

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "weights": self.weights.to_dict(),
            "kl_beta": self.kl_beta,
        }


_STAGE_CONFIGS = {
    Stage.STAGE1: StageConfig(
        stage=Stage.STAGE1,
        weights=RewardWeights(format=1.0, acc=1.0, pqtr=1.0, pqlr=0.0, esr=0.0),
        kl_beta=5e-3,
    ),
    Stage.STAGE2: StageConfig(
        stage=Stage.STAGE2,
        weights=RewardWeights(format=1.0, acc=1.5, pqtr=0.5, pqlr=0.8, esr=0.5),
        kl_beta=1e-2,
    ),
}


def stage_config(stage: Stage | str) -> StageConfig:
    return _STAGE_CONFIGS[Stage(stage)]


@dataclass(frozen=True)
class RewardConfig:
    weights: RewardWeights
    epsilon: int = DEFAULT_EPSILON
    on_verifier_error: OnVerifierError = "fail"
    stage: Stage | None = None

    @staticmethod
    def for_stage(
        stage: Stage | str,
        *,
        epsilon: int = DEFAULT_EPSILON,
        on_verifier_error: OnVerifierError = "fail",
    ) -> RewardConfig:
        resolved = Stage(stage)
        return RewardConfig(
            weights=stage_config(resolved).weights,
            epsilon=epsilon,
            on_verifier_error=on_verifier_error,
            stage=resolved,
        )


@dataclass(frozen=True)
class RewardBreakdown:
    format: float
    acc: float
    pqtr: float
    pqlr: float
    esr: float
    gate: float
    total: float
    judged_steps: tuple[float, ...] = ()
    evidence_pairs: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "format": self.format,
            "acc": self.acc,
            "pqtr": self.pqtr,
            "pqlr": self.pqlr,
            "esr": self.esr,
            "gate": self.gate,
            "total": self.total,
            "details": {
                "judged_steps": list(self.judged_steps),
                "evidence_pairs": list(self.evidence_pairs),
            },
        }


def compute_format(transcript: Transcript) -> float:
    return 1.0 if transcript.format_ok else 0.0


def compute_accuracy(transcript: Transcript, ground_truth: str | None) -> float:
    """Binary agreement with ground truth; unparsable answers never match."""
    if ground_truth is None or transcript.answer is Answer.UNPARSABLE:
        return 0.0
    return 1.0 if transcript.answer.value == ground_truth else 0.0


def compute_pqtr(response_steps: int, template_steps: int, epsilon: int = DEFAULT_EPSILON) -> float:
    """Step-count reward: ratio of generated to template steps, zeroed past the
    verbosity band. Returns min(1, |R|/|T|) when |R| <= |T| + epsilon, else 0."""
    if template_steps < 1:
        raise InvalidTemplate("template must have at least one step")
    if response_steps > template_steps + epsilon:
        return 0.0
    return min(1.0, response_steps / template_steps)


def _within_band(response_steps: int, template_steps: int, epsilon: int) -> bool:
    return template_steps <= response_steps <= template_steps + epsilon


def _clamp(score: float) -> float:
    return min(1.0, max(0.0, score))


def _safe_score(call, on_error: OnVerifierError) -> float:
    try:
        return _clamp(call())
    except VerifierError as exc:
        if on_error == "zero":
            logger.warning("verifier call failed, scoring 0 per error policy: %s", exc)
            return 0.0
        raise


def compute_pqlr(
    transcript: Transcript,
    template: ReasoningTemplate,
    judge: Judge,
    available_views: tuple[str, ...],
    *,
    epsilon: int = DEFAULT_EPSILON,
    on_verifier_error: OnVerifierError = "fail",
) -> tuple[float, tuple[float, ...]]:
    """Step-quality reward: mean judge score of positionally aligned steps.

    Response step i answers template step i's (view-filtered) questions; extra
    response steps within the verbosity band go unscored. Steps whose question
    list filtered down to nothing drop out of both numerator and denominator.
    Outside the band [|T|, |T|+epsilon] the reward is 0. Returns (reward,
    per-step scores of the judged steps in order).
    """
    if not _within_band(transcript.step_count, template.step_count, epsilon):
        return 0.0, ()
    filtered = filter_questions(template, available_views)
    scores = []
    for template_step, response_step in zip(filtered.steps, transcript.steps):
        questions = [q.text for q in template_step.questions]
        if not questions:
            continue
        scores.append(
            _safe_score(
                lambda: judge.judge(response_step.text, questions, list(available_views)),
                on_verifier_error,
            )
        )
    if not scores:
        return 0.0, ()
    return sum(scores) / len(scores), tuple(scores)


def compute_esr(
    transcript: Transcript,
    template: ReasoningTemplate,
    study: EchoStudy,
    scorer: SimilarityScorer,
    *,
    epsilon: int = DEFAULT_EPSILON,
    on_verifier_error: OnVerifierError = "fail",
) -> tuple[float, tuple[float, ...]]:
    """Evidence-support reward: mean similarity of view-citing sentences to the
    footage of the view they cite.

    A (sentence, view) mention pairs with the best-scoring video of that view;
    mentions of views the study has no footage for contribute no pair. No pairs
    at all, or a step count outside the band, yields 0. Returns (reward,
    per-pair scores).
    """
    if not _within_band(transcript.step_count, template.step_count, epsilon):
        return 0.0, ()
    pair_scores = []
    for step in transcript.steps:
        for sentence in step.sentences:
            for view in sentence.view_mentions:
                videos = study.videos_for_view(view)
                if not videos:
                    continue
                pair_scores.append(
                    max(
                        _safe_score(
                            lambda v=video: scorer.score(sentence.text, v), on_verifier_error
                        )
                        for video in videos
                    )
                )
    if not pair_scores:
        return 0.0, ()
    return sum(pair_scores) / len(pair_scores), tuple(pair_scores)


def combine(
    weights: RewardWeights,
    *,
    format_reward: float,
    acc: float,
    pqtr: float,
    pqlr: float,
    esr: float,
) -> tuple[float, float]:
    """Total reward with hallucination gating: the process rewards only count
    when the final answer is correct. Returns (total, gate)."""
    gate = 1.0 if acc == 1.0 else 0.0
    total = (
        weights.format * format_reward
        + weights.acc * acc
        + gate * (weights.pqlr * pqlr + weights.pqtr * pqtr + weights.esr * esr)
    )
    return total, gate


def score_transcript(
    transcript: Transcript,
    template: ReasoningTemplate,
    study: EchoStudy,
    judge: Judge,
    scorer: SimilarityScorer,
    config: RewardConfig,
) -> RewardBreakdown:
    available_views = study.available_views()
    format_reward = compute_format(transcript)
    acc = compute_accuracy(transcript, study.ground_truth)
    pqtr = compute_pqtr(transcript.step_count, template.step_count, config.epsilon)
    pqlr, judged_steps = compute_pqlr(
        transcript,
        template,
        judge,
        available_views,
        epsilon=config.epsilon,
        on_verifier_error=config.on_verifier_error,
    )
    esr, evidence_pairs = compute_esr(
        transcript,
        template,
        study,
        scorer,
        epsilon=config.epsilon,
        on_verifier_error=config.on_verifier_error,
    )
    total, gate = combine(
        config.weights,
        format_reward=format_reward,
        acc=acc,
        pqtr=pqtr,
        pqlr=pqlr,
        esr=esr,
    )
    return RewardBreakdown(
        format=format_reward,
        acc=acc,
        pqtr=pqtr,
        pqlr=pqlr,
        esr=esr,
        gate=gate,
        total=total,
        judged_steps=judged_steps,
        evidence_pairs=evidence_pairs,
    )
