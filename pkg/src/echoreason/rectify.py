"""Template-guided reasoning rectification: verify steps, accept or reprompt.

One verification round, at most one rectification round, never more than two
policy calls per case. Unlike the process-quality reward, step scoring here has
no step-count gate: whatever the policy generated gets verified, because a
hard zero would trigger rectification with nothing specific to flag.
"""

from __future__ import annotations

import hashlib
import logging
import statistics
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Protocol, Sequence

from .errors import VerifierError
from .parsing import _STEP_MARKER_RE, Transcript, parse
from .studies import EchoStudy
from .templates import ReasoningTemplate, filter_questions
from .vocab import ViewVocabulary, load_vocabulary
from .verifiers import Judge

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.4


class Decision(str, Enum):
    ACCEPTED = "Accepted"
    RECTIFIED = "Rectified"


@dataclass(frozen=True)
class StepScore:
    step: int
    score: float


@dataclass(frozen=True)
class FlaggedStep:
    step: int
    text: str


@dataclass(frozen=True)
class RectificationContext:
    previous_transcript: str
    flagged_steps: tuple[FlaggedStep, ...]
    instruction: str

    @property
    def prompt_digest(self) -> str:
        return hashlib.sha256(self.instruction.encode("utf-8")).hexdigest()


class Policy(Protocol):
    def generate(
        self,
        study: EchoStudy,
        template: ReasoningTemplate,
        rectification_context: RectificationContext | None = None,
    ) -> str: ...


@dataclass(frozen=True)
class RoundRecord:
    transcript: str
    per_step_scores: tuple[StepScore, ...]
    unscored_template_steps: tuple[int, ...]
    mean_score: float
    mad: float
    flagged_step_indices: tuple[int, ...]


@dataclass(frozen=True)
class TrrTrace:
    round1: RoundRecord
    decision: Decision
    round2_prompt_digest: str | None
    round2_transcript: str | None
    final_answer: str
    threshold: float

    def to_dict(self) -> dict:
        round2 = None
        if self.decision is Decision.RECTIFIED:
            round2 = {
                "prompt_digest": self.round2_prompt_digest,
                "transcript": self.round2_transcript,
            }
        return {
            "round1": {
                "transcript": self.round1.transcript,
                "per_step_scores": [
                    {"step": s.step, "score": s.score} for s in self.round1.per_step_scores
                ],
                "unscored_template_steps": list(self.round1.unscored_template_steps),
                "mean_score": self.round1.mean_score,
                "mad": self.round1.mad,
                "flagged_step_indices": list(self.round1.flagged_step_indices),
            },
            "decision": self.decision.value,
            "round2": round2,
            "final_answer": self.final_answer,
            "threshold": self.threshold,
        }


def rectification_prompt_template() -> str:
    return (
        resources.files("echoreason.data").joinpath("rectification_prompt.txt").read_text("utf-8")
    )


def score_steps(
    transcript: Transcript,
    template: ReasoningTemplate,
    judge: Judge,
    available_views: Sequence[str],
    *,
    on_verifier_error: str = "fail",
) -> tuple[list[StepScore], list[int]]:
    """Judge each response step against its positionally aligned template step.

    Template positions beyond the response, and positions whose question list
    filtered down to nothing, go unscored. Returns (scores, unscored template
    indices).
    """
    filtered = filter_questions(template, tuple(available_views))
    scored: list[StepScore] = []
    unscored: list[int] = []
    for template_step in filtered.steps:
        position = template_step.index
        questions = [q.text for q in template_step.questions]
        if position > transcript.step_count or not questions:
            unscored.append(position)
            continue
        response_step = transcript.steps[position - 1]
        try:
            score = min(1.0, max(0.0, judge.judge(response_step.text, questions, list(available_views))))
        except VerifierError as exc:
            if on_verifier_error != "zero":
                raise
            logger.warning("step judge failed, scoring 0 per error policy: %s", exc)
            score = 0.0
        scored.append(StepScore(step=response_step.index, score=score))
    return scored, unscored


def flag_low_steps(scores: Sequence[float]) -> list[int]:
    """1-based indices scoring strictly below mean minus one median absolute
    deviation. May be empty; callers that must flag something fall back to the
    earliest minimum."""
    if not scores:
        return []
    mean = sum(scores) / len(scores)
    median = statistics.median(scores)
    mad = statistics.median([abs(s - median) for s in scores])
    cutoff = mean - mad
    return [i for i, s in enumerate(scores, start=1) if s < cutoff]


def run_trr(
    study: EchoStudy,
    template: ReasoningTemplate,
    judge: Judge,
    policy: Policy,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    view_vocab: ViewVocabulary | None = None,
    on_verifier_error: str = "fail",
) -> TrrTrace:
    vocab = view_vocab or load_vocabulary()
    available_views = study.available_views()

    raw1 = policy.generate(study, template, None)
    transcript1 = parse(raw1, vocab)
    scored, unscored = score_steps(
        transcript1, template, judge, available_views, on_verifier_error=on_verifier_error
    )
    score_values = [s.score for s in scored]
    mean_score = sum(score_values) / len(score_values) if score_values else 0.0
    if score_values:
        median = statistics.median(score_values)
        mad = statistics.median([abs(s - median) for s in score_values])
    else:
        mad = 0.0
    flagged = [scored[pos - 1].step for pos in flag_low_steps(score_values)]

    if mean_score >= threshold:
        round1 = RoundRecord(
            transcript=raw1,
            per_step_scores=tuple(scored),
            unscored_template_steps=tuple(unscored),
            mean_score=mean_score,
            mad=mad,
            flagged_step_indices=tuple(flagged),
        )
        return TrrTrace(
            round1=round1,
            decision=Decision.ACCEPTED,
            round2_prompt_digest=None,
            round2_transcript=None,
            final_answer=transcript1.answer.value,
            threshold=threshold,
        )

    if not flagged:
        if scored:
            # Nothing below the cutoff (e.g. zero spread): flag the earliest minimum
            # so the reprompt always highlights a concrete step.
            worst = min(range(len(scored)), key=lambda i: score_values[i])
            flagged = [scored[worst].step]
        else:
            # Nothing was scoreable; every generated step is suspect.
            flagged = [step.index for step in transcript1.steps]

    flagged_steps = tuple(
        FlaggedStep(step=i, text=_step_body(transcript1.steps[i - 1].text)) for i in flagged
    )
    context = build_rectification_context(raw1, flagged_steps)
    raw2 = policy.generate(study, template, context)
    transcript2 = parse(raw2, vocab)

    round1 = RoundRecord(
        transcript=raw1,
        per_step_scores=tuple(scored),
        unscored_template_steps=tuple(unscored),
        mean_score=mean_score,
        mad=mad,
        flagged_step_indices=tuple(flagged),
    )
    return TrrTrace(
        round1=round1,
        decision=Decision.RECTIFIED,
        round2_prompt_digest=context.prompt_digest,
        round2_transcript=raw2,
        final_answer=transcript2.answer.value,
        threshold=threshold,
    )


def _step_body(text: str) -> str:
    """Step text without its own `Step N:` label, for re-labelled listings."""
    stripped = text.strip()
    match = _STEP_MARKER_RE.match(stripped)
    return stripped[match.end() :].strip() if match else stripped


def build_rectification_context(
    previous_transcript: str, flagged_steps: tuple[FlaggedStep, ...]
) -> RectificationContext:
    if flagged_steps:
        flagged_block = "\n".join(f"Step {f.step}: {f.text}" for f in flagged_steps)
    else:
        flagged_block = "(no individual step could be verified; regenerate the full reasoning)"
    instruction = rectification_prompt_template().format(
        previous_transcript=previous_transcript, flagged_block=flagged_block
    )
    return RectificationContext(
        previous_transcript=previous_transcript,
        flagged_steps=flagged_steps,
        instruction=instruction,
    )
