"""Reasoning-template library: loading, validation, retrieval, view filtering.

A template is an ordered stepwise diagnostic procedure for one disease. Each
step carries a high-level instruction plus one to five verification questions,
each optionally bound to the views it needs. Name and metadata together form
the retrieval key.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from importlib import resources
from typing import Iterable, Sequence

from .errors import DuplicateIdError, SchemaError, VocabularyError
from .vocab import ViewVocabulary

MAX_QUESTIONS_PER_STEP = 5

# Lint list: step instructions must stay generic; any of these markers means a
# patient-specific conclusion leaked into the procedure.
FORBIDDEN_INSTRUCTION_MARKERS = (
    "this patient",
    "the patient has",
    "the patient is",
    "in this case",
    "final answer",
    "the answer is",
    "diagnosis is confirmed",
)


@dataclass(frozen=True)
class Question:
    text: str
    required_views: tuple[str, ...] = ()

    @property
    def view_agnostic(self) -> bool:
        return not self.required_views


@dataclass(frozen=True)
class TemplateStep:
    index: int
    instruction: str
    questions: tuple[Question, ...]


@dataclass(frozen=True)
class TemplateMeta:
    knowledge_tags: tuple[str, ...]
    description: str
    application_scenario: str
    views_required: tuple[str, ...]
    measurements_required: tuple[str, ...]


@dataclass(frozen=True)
class ReasoningTemplate:
    id: str
    name: str
    meta: TemplateMeta
    steps: tuple[TemplateStep, ...]

    @property
    def step_count(self) -> int:
        return len(self.steps)


# A filtered template has the same shape; only per-step question lists shrink.
FilteredTemplate = ReasoningTemplate


@dataclass(frozen=True)
class RankedTemplate:
    template_id: str
    similarity: float


@dataclass(frozen=True)
class RetrievalResult:
    template_id: str
    similarity: float
    ranked_rest: tuple[RankedTemplate, ...]


def retrieval_key(template: ReasoningTemplate) -> str:
    """Whitespace-joined name, knowledge tags, description, and scenario."""
    return " ".join(
        [
            template.name,
            " ".join(template.meta.knowledge_tags),
            template.meta.description,
            template.meta.application_scenario,
        ]
    )


def template_from_dict(
    payload: dict, vocab: ViewVocabulary, *, source: str = "<template>"
) -> ReasoningTemplate:
    def fail(message: str, path: str) -> SchemaError:
        return SchemaError(message, source=source, path=path)

    def resolve_view(name: object, path: str) -> str:
        if not isinstance(name, str) or not name:
            raise fail("view name must be a non-empty string", path)
        if not vocab.is_known(name):
            raise VocabularyError(f"{source}: at {path}: unknown view name {name!r}")
        return vocab.resolve(name)

    if not isinstance(payload, dict):
        raise fail("template must be a JSON object", "$")
    template_id = payload.get("id")
    if not isinstance(template_id, str) or not template_id:
        raise fail("id must be a non-empty string", "id")
    name = payload.get("name")
    if not isinstance(name, str) or not name:
        raise fail("name must be a non-empty string", "name")

    raw_meta = payload.get("meta")
    if not isinstance(raw_meta, dict):
        raise fail("meta must be an object", "meta")
    tags = raw_meta.get("knowledge_tags")
    if not isinstance(tags, list) or not tags or not all(isinstance(t, str) and t for t in tags):
        raise fail("knowledge_tags must be a non-empty list of strings", "meta.knowledge_tags")
    for key in ("description", "application_scenario"):
        if not isinstance(raw_meta.get(key), str):
            raise fail(f"{key} must be a string", f"meta.{key}")
    raw_views = raw_meta.get("views_required")
    if not isinstance(raw_views, list) or not raw_views:
        raise fail("views_required must be a non-empty list", "meta.views_required")
    views_required = tuple(
        resolve_view(v, f"meta.views_required[{i}]") for i, v in enumerate(raw_views)
    )
    raw_measurements = raw_meta.get("measurements_required", [])
    if not isinstance(raw_measurements, list) or not all(
        isinstance(m, str) and m for m in raw_measurements
    ):
        raise fail("measurements_required must be a list of strings", "meta.measurements_required")
    meta = TemplateMeta(
        knowledge_tags=tuple(tags),
        description=raw_meta["description"],
        application_scenario=raw_meta["application_scenario"],
        views_required=views_required,
        measurements_required=tuple(raw_measurements),
    )

    raw_steps = payload.get("steps")
    if not isinstance(raw_steps, list) or not raw_steps:
        raise fail("steps must be a non-empty list", "steps")
    steps: list[TemplateStep] = []
    for i, raw_step in enumerate(raw_steps):
        path = f"steps[{i}]"
        if not isinstance(raw_step, dict):
            raise fail("step must be an object", path)
        index = raw_step.get("index")
        if not isinstance(index, int) or isinstance(index, bool) or index != i + 1:
            raise fail(f"index must be {i + 1} (contiguous from 1)", f"{path}.index")
        instruction = raw_step.get("instruction")
        if not isinstance(instruction, str) or not instruction:
            raise fail("instruction must be a non-empty string", f"{path}.instruction")
        lowered = instruction.lower()
        for marker in FORBIDDEN_INSTRUCTION_MARKERS:
            if marker in lowered:
                raise fail(
                    f"instruction contains patient-specific conclusion marker {marker!r}",
                    f"{path}.instruction",
                )
        raw_questions = raw_step.get("questions")
        if not isinstance(raw_questions, list) or not raw_questions:
            raise fail("questions must be a non-empty list", f"{path}.questions")
        if len(raw_questions) > MAX_QUESTIONS_PER_STEP:
            raise fail(
                f"at most {MAX_QUESTIONS_PER_STEP} questions per step, got {len(raw_questions)}",
                f"{path}.questions",
            )
        questions: list[Question] = []
        for j, raw_question in enumerate(raw_questions):
            qpath = f"{path}.questions[{j}]"
            if not isinstance(raw_question, dict):
                raise fail("question must be an object", qpath)
            text = raw_question.get("text")
            if not isinstance(text, str) or not text:
                raise fail("text must be a non-empty string", f"{qpath}.text")
            raw_required = raw_question.get("required_views", [])
            if not isinstance(raw_required, list):
                raise fail("required_views must be a list", f"{qpath}.required_views")
            required = tuple(
                resolve_view(v, f"{qpath}.required_views[{k}]")
                for k, v in enumerate(raw_required)
            )
            for view in required:
                if view not in views_required:
                    raise fail(
                        f"question view {view!r} missing from meta.views_required",
                        f"{qpath}.required_views",
                    )
            questions.append(Question(text=text, required_views=required))
        steps.append(TemplateStep(index=index, instruction=instruction, questions=tuple(questions)))

    return ReasoningTemplate(id=template_id, name=name, meta=meta, steps=tuple(steps))


def template_to_dict(template: ReasoningTemplate) -> dict:
    return {
        "id": template.id,
        "name": template.name,
        "meta": {
            "knowledge_tags": list(template.meta.knowledge_tags),
            "description": template.meta.description,
            "application_scenario": template.meta.application_scenario,
            "views_required": list(template.meta.views_required),
            "measurements_required": list(template.meta.measurements_required),
        },
        "steps": [
            {
                "index": step.index,
                "instruction": step.instruction,
                "questions": [
                    {"text": q.text, "required_views": list(q.required_views)}
                    for q in step.questions
                ],
            }
            for step in template.steps
        ],
    }


def load_templates(dir_path: str, vocab: ViewVocabulary) -> list[ReasoningTemplate]:
    """Load every `*.json` template in a directory, validated and sorted by id."""
    if not os.path.isdir(dir_path):
        raise SchemaError("template directory does not exist", source=dir_path)
    templates: list[ReasoningTemplate] = []
    seen: dict[str, str] = {}
    for filename in sorted(os.listdir(dir_path)):
        if not filename.endswith(".json"):
            continue
        path = os.path.join(dir_path, filename)
        with open(path, encoding="utf-8") as handle:
            try:
                payload = json.load(handle)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc}", source=path) from exc
        template = template_from_dict(payload, vocab, source=path)
        if template.id in seen:
            raise DuplicateIdError(
                f"template id {template.id!r} in {path} already defined in {seen[template.id]}"
            )
        seen[template.id] = path
        templates.append(template)
    templates.sort(key=lambda t: t.id)
    return templates


def bundled_template_dir() -> str:
    """Path of the exemplar templates shipped with the package."""
    return str(resources.files(__package__).joinpath("data", "templates"))


def retrieve(query: str, templates: Sequence[ReasoningTemplate], embedder) -> RetrievalResult:
    """Top-1 template by cosine similarity of query vs retrieval key.

    Exact similarity ties break toward the lexically smaller id.
    """
    if not templates:
        raise ValueError("templates must be non-empty")
    vectors = embedder.embed([query] + [retrieval_key(t) for t in templates])
    query_vec = vectors[0]
    ranked = sorted(
        (
            RankedTemplate(template_id=t.id, similarity=_dot(query_vec, vec))
            for t, vec in zip(templates, vectors[1:])
        ),
        key=lambda r: (-r.similarity, r.template_id),
    )
    return RetrievalResult(
        template_id=ranked[0].template_id,
        similarity=ranked[0].similarity,
        ranked_rest=tuple(ranked[1:]),
    )


def filter_questions(
    template: ReasoningTemplate, available_views: Iterable[str]
) -> FilteredTemplate:
    """Drop questions whose required views are not all available.

    View-agnostic questions always survive; step count never changes.
    """
    available = set(available_views)
    filtered_steps = tuple(
        replace(
            step,
            questions=tuple(
                q
                for q in step.questions
                if q.view_agnostic or set(q.required_views) <= available
            ),
        )
        for step in template.steps
    )
    return replace(template, steps=filtered_steps)


def _dot(a: Sequence[float], b: Sequence[float]) -> float:
    return sum(x * y for x, y in zip(a, b))
