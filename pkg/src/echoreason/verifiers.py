"""Verifier gateway: judge/similarity/embedding protocols, deterministic mocks,
and an HTTP client speaking the verifier wire protocol.

The mocks are pure functions of their inputs so that every score in tests and
simulations is reproducible. The remote client is the only component that
performs I/O.
"""

from __future__ import annotations

import math
import os
import re
import threading
import time
from collections.abc import Callable, Sequence
from typing import Protocol

import httpx
from pydantic import BaseModel, ConfigDict, ValidationError

from .errors import (
    EmptyQuestionSet,
    MissingCaption,
    ProtocolError,
    RangeError,
    TransportError,
)
from .studies import Video
from .vocab import ViewVocabulary, load_vocabulary

VERIFIER_TOKEN_ENV = "CRT_VERIFIER_TOKEN"

JUDGE_PATH = "/v1/judge"
SIMILARITY_PATH = "/v1/similarity"
EMBED_PATH = "/v1/embed"

_TOKEN_RE = re.compile(r"[a-z0-9]+")

#: Words that signal a step commits to a finding rather than trailing off.
CONCLUSION_LEXICON = (
    "yes",
    "no",
    "present",
    "absent",
    "normal",
    "abnormal",
    "consistent",
    "confirmed",
    "excluded",
)
_CONCLUSION_RE = re.compile(r"\b(?:" + "|".join(CONCLUSION_LEXICON) + r")\b")

EMBEDDING_DIM = 256
_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211
_FNV_MASK = (1 << 64) - 1


def tokenize(text: str, min_length: int = 1) -> list[str]:
    """Lowercase alphanumeric runs of at least ``min_length`` characters."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= min_length]


def content_tokens(text: str) -> set[str]:
    """Token set used by the mock verifiers; short function words drop out."""
    return set(tokenize(text, min_length=3))


class Judge(Protocol):
    def judge(
        self, step_text: str, questions: Sequence[str], available_views: Sequence[str]
    ) -> float: ...


class SimilarityScorer(Protocol):
    def score(self, text: str, video: Video) -> float: ...


class Embedder(Protocol):
    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


class MockJudge:
    """Lexical stand-in for an LLM judge.

    Scores 0.5 * question-token coverage + 0.25 * mentions any known view
    + 0.25 * contains a conclusion word. Deterministic and order-insensitive;
    `available_views` rides along for protocol parity with real judges.
    """

    def __init__(self, view_vocab: ViewVocabulary | None = None) -> None:
        self._vocab = view_vocab or load_vocabulary()

    def judge(
        self, step_text: str, questions: Sequence[str], available_views: Sequence[str]
    ) -> float:
        if not questions:
            raise EmptyQuestionSet("judge called with an empty question list")
        step_tokens = content_tokens(step_text)
        question_tokens = set()
        for question in questions:
            question_tokens |= content_tokens(question)
        coverage = (
            len(step_tokens & question_tokens) / len(question_tokens) if question_tokens else 0.0
        )
        coverage = min(1.0, max(0.0, coverage))
        has_view = bool(self._vocab.find_mentions(step_text))
        has_conclusion = _CONCLUSION_RE.search(step_text.lower()) is not None
        return 0.5 * coverage + 0.25 * float(has_view) + 0.25 * float(has_conclusion)


class MockScorer:
    """Text-video similarity as Jaccard overlap with the video's caption."""

    def score(self, text: str, video: Video) -> float:
        if not video.caption:
            raise MissingCaption(f"video {video.id!r} has no caption to ground against")
        return jaccard(content_tokens(text), content_tokens(video.caption))


def jaccard(left: set[str], right: set[str]) -> float:
    union = left | right
    if not union:
        return 0.0
    return len(left & right) / len(union)


class HashedBowEmbedder:
    """Hashed bag-of-words embedding: FNV-1a over tokens into 256 buckets,
    L2-normalized so dot products are cosine similarities."""

    dim = EMBEDDING_DIM

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return [self._embed_one(text) for text in texts]

    def _embed_one(self, text: str) -> list[float]:
        counts = [0.0] * EMBEDDING_DIM
        for token in tokenize(text, min_length=3):
            counts[_fnv1a(token) % EMBEDDING_DIM] += 1.0
        norm = math.sqrt(sum(c * c for c in counts))
        if norm == 0.0:
            return counts
        return [c / norm for c in counts]


def _fnv1a(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _FNV_MASK
    return h


def cosine(left: Sequence[float], right: Sequence[float]) -> float:
    dot = sum(a * b for a, b in zip(left, right))
    left_norm = math.sqrt(sum(a * a for a in left))
    right_norm = math.sqrt(sum(b * b for b in right))
    if left_norm == 0.0 or right_norm == 0.0:
        return 0.0
    return dot / (left_norm * right_norm)


# --- wire protocol models ---------------------------------------------------


class JudgeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    step_text: str
    questions: list[str]
    available_views: list[str]


class SimilarityRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    text: str
    view_label: str
    video_uri: str


class EmbedRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    texts: list[str]


class ScoreResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    score: float


class EmbedResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    vectors: list[list[float]]


class RemoteVerifier:
    """Client for a verifier service exposing the judge/similarity/embed routes.

    Retries transport failures and 5xx responses with exponential backoff;
    4xx responses and malformed payloads fail immediately. Concurrent calls
    are capped by a semaphore so a slow verifier cannot be flooded.
    """

    def __init__(
        self,
        base_url: str,
        *,
        max_attempts: int = 3,
        backoff_base: float = 0.25,
        max_inflight: int = 8,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        headers = {}
        token = os.environ.get(VERIFIER_TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            base_url=base_url, headers=headers, timeout=timeout, transport=transport
        )
        self._max_attempts = max_attempts
        self._backoff_base = backoff_base
        self._semaphore = threading.BoundedSemaphore(max_inflight)
        self._sleep = sleep

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> RemoteVerifier:
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def judge(
        self, step_text: str, questions: Sequence[str], available_views: Sequence[str]
    ) -> float:
        request = JudgeRequest(
            step_text=step_text,
            questions=list(questions),
            available_views=list(available_views),
        )
        payload = self._post(JUDGE_PATH, request.model_dump())
        return self._parse_score(payload, JUDGE_PATH)

    def score(self, text: str, video: Video) -> float:
        request = SimilarityRequest(text=text, view_label=video.view_label, video_uri=video.uri)
        payload = self._post(SIMILARITY_PATH, request.model_dump())
        return self._parse_score(payload, SIMILARITY_PATH)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        request = EmbedRequest(texts=list(texts))
        payload = self._post(EMBED_PATH, request.model_dump())
        try:
            response = EmbedResponse.model_validate(payload)
        except ValidationError as exc:
            raise ProtocolError(f"malformed response from {EMBED_PATH}: {exc}") from exc
        if len(response.vectors) != len(texts):
            raise ProtocolError(
                f"{EMBED_PATH} returned {len(response.vectors)} vectors for {len(texts)} texts"
            )
        return response.vectors

    def _parse_score(self, payload: object, path: str) -> float:
        try:
            response = ScoreResponse.model_validate(payload)
        except ValidationError as exc:
            raise ProtocolError(f"malformed response from {path}: {exc}") from exc
        if math.isnan(response.score) or not 0.0 <= response.score <= 1.0:
            raise RangeError(f"{path} returned score {response.score!r} outside [0, 1]")
        return response.score

    def _post(self, path: str, body: dict) -> object:
        last_error: Exception | None = None
        for attempt in range(self._max_attempts):
            if attempt:
                self._sleep(self._backoff_base * 2 ** (attempt - 1))
            try:
                with self._semaphore:
                    response = self._client.post(path, json=body)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = TransportError(f"{path} returned {response.status_code}")
                continue
            if response.status_code >= 300:
                raise ProtocolError(f"{path} returned {response.status_code}: {response.text}")
            try:
                return response.json()
            except ValueError as exc:
                raise ProtocolError(f"{path} returned a non-JSON body") from exc
        raise TransportError(
            f"{path} failed after {self._max_attempts} attempts: {last_error}"
        ) from last_error
