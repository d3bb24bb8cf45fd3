"""Transcript parsing: think/answer blocks, enumerated steps, view mentions.

Parsing is total: any input string yields a Transcript, with malformed
structure surfacing as `format_ok=False` or `Answer.UNPARSABLE` rather than an
exception.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from enum import Enum

from .vocab import ViewVocabulary

THINK_OPEN, THINK_CLOSE = "<think>", "</think>"
ANSWER_OPEN, ANSWER_CLOSE = "<answer>", "</answer>"

# `Step N:` optionally wrapped in markdown emphasis or heading markup. The
# word boundary applies only to the bare form; emphasis characters are word
# characters themselves, so `__Step 2__:` needs the markup branch.
_STEP_MARKER_RE = re.compile(
    r"(?:[*_#`]{1,3}\s*|\b)step\s*(\d+)\s*[*_`]{0,3}\s*:", re.IGNORECASE
)

# Sentence ends at `.`, `;`, `?`, or `!` followed by whitespace or end of text.
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.;?!])(?:\s+|\Z)")

_ANSWER_STRIP_CHARS = string.whitespace + string.punctuation


class Answer(str, Enum):
    YES = "Yes"
    NO = "No"
    UNPARSABLE = "Unparsable"


@dataclass(frozen=True)
class Sentence:
    text: str
    view_mentions: tuple[str, ...]


@dataclass(frozen=True)
class ReasoningStep:
    index: int
    text: str
    sentences: tuple[Sentence, ...]


@dataclass(frozen=True)
class Transcript:
    raw: str
    think_block: str | None
    answer_block: str | None
    steps: tuple[ReasoningStep, ...]
    answer: Answer
    format_ok: bool

    @property
    def step_count(self) -> int:
        return len(self.steps)


def normalize_answer(answer_block: str) -> Answer:
    """Strict binary normalization: only a bare yes/no (any case) parses."""
    folded = answer_block.lower().strip(_ANSWER_STRIP_CHARS)
    if folded == "yes":
        return Answer.YES
    if folded == "no":
        return Answer.NO
    return Answer.UNPARSABLE


def parse(raw: str, view_vocab: ViewVocabulary) -> Transcript:
    think_block, think_span = _extract_block(raw, THINK_OPEN, THINK_CLOSE)
    answer_block, answer_span = _extract_block(raw, ANSWER_OPEN, ANSWER_CLOSE)
    format_ok = _check_format(raw, think_span, answer_span)
    steps = _split_steps(think_block, view_vocab) if think_block is not None else ()
    answer = normalize_answer(answer_block) if answer_block is not None else Answer.UNPARSABLE
    return Transcript(
        raw=raw,
        think_block=think_block,
        answer_block=answer_block,
        steps=steps,
        answer=answer,
        format_ok=format_ok,
    )


def _extract_block(
    raw: str, open_tag: str, close_tag: str
) -> tuple[str | None, tuple[int, int] | None]:
    """Content of the unique open/close pair, or None when absent or ambiguous."""
    if raw.count(open_tag) != 1 or raw.count(close_tag) != 1:
        return None, None
    start = raw.index(open_tag)
    end = raw.index(close_tag)
    if end < start:
        return None, None
    return raw[start + len(open_tag) : end], (start, end + len(close_tag))


def _check_format(
    raw: str, think_span: tuple[int, int] | None, answer_span: tuple[int, int] | None
) -> bool:
    """One think block, then one answer block, only whitespace elsewhere."""
    if think_span is None or answer_span is None:
        return False
    if think_span[1] > answer_span[0]:
        return False
    outside = raw[: think_span[0]] + raw[think_span[1] : answer_span[0]] + raw[answer_span[1] :]
    return outside.strip() == ""


def _split_steps(think_block: str, view_vocab: ViewVocabulary) -> tuple[ReasoningStep, ...]:
    """Split on `Step N:` markers, re-indexing 1..n in textual order.

    Text before the first marker is folded into the first step; a block with no
    markers parses as a single step. Step texts keep their raw labels, so their
    concatenation reconstructs the think block exactly.
    """
    markers = list(_STEP_MARKER_RE.finditer(think_block))
    if not markers:
        if not think_block.strip():
            return ()
        segments = [think_block]
    else:
        first = markers[0].start()
        segments = []
        for i, marker in enumerate(markers):
            end = markers[i + 1].start() if i + 1 < len(markers) else len(think_block)
            segments.append(think_block[marker.start() : end])
        if think_block[:first]:
            segments[0] = think_block[:first] + segments[0]
    return tuple(
        ReasoningStep(index=i, text=segment, sentences=_split_sentences(segment, view_vocab))
        for i, segment in enumerate(segments, start=1)
    )


def _split_sentences(text: str, view_vocab: ViewVocabulary) -> tuple[Sentence, ...]:
    sentences = []
    for piece in _SENTENCE_SPLIT_RE.split(text):
        stripped = piece.strip()
        if not stripped:
            continue
        sentences.append(
            Sentence(text=stripped, view_mentions=tuple(view_vocab.find_mentions(stripped)))
        )
    return tuple(sentences)
