"""Backend contracts: chat, embedding and judging.

Every client, live or mock, tallies its usage through :class:`BackendUsage`
so cost accounting is exact.  Structured chat output is requested as JSON
and parsed strictly, with a single reprompt before giving up.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, runtime_checkable

import numpy as np

from ..errors import BackendError, BadResponse
from .prompts import get_template

logger = logging.getLogger(__name__)

JUDGE_RUBRICS = (
    "keypoint-coverage",
    "recall-compare",
    "precision-compare",
    "usefulness-0-10",
)


@dataclass(frozen=True)
class KeypointJudgement:
    keypoint: str
    covered: bool
    contradicted: bool


@dataclass(frozen=True)
class CompareVerdict:
    """Pairwise outcome from the first candidate's perspective."""

    outcome: str  # "win" | "tie" | "loss"

    def __post_init__(self) -> None:
        if self.outcome not in ("win", "tie", "loss"):
            raise ValueError(f"bad outcome {self.outcome!r}")

    def flipped(self) -> "CompareVerdict":
        if self.outcome == "win":
            return CompareVerdict("loss")
        if self.outcome == "loss":
            return CompareVerdict("win")
        return self


@dataclass(frozen=True)
class ChatRequest:
    """A prompt-template invocation; all template slots must be bound."""

    template_id: str
    bindings: dict[str, str] = field(default_factory=dict)
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        template = get_template(self.template_id)
        missing = template.slots - set(self.bindings)
        if missing:
            raise ValueError(
                f"template {self.template_id!r} missing slots: {sorted(missing)}"
            )

    def render(self) -> tuple[str, str]:
        return get_template(self.template_id).render(self.bindings)


class BackendUsage:
    """Thread-safe token/call tallies; additive across calls."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.prompt_tokens = 0
        self.completion_tokens = 0
        self.calls = 0

    def add(self, prompt_tokens: int, completion_tokens: int) -> None:
        if prompt_tokens < 0 or completion_tokens < 0:
            raise ValueError("token counts must be non-negative")
        with self._lock:
            self.prompt_tokens += prompt_tokens
            self.completion_tokens += completion_tokens
            self.calls += 1

    def merge(self, other: "BackendUsage") -> None:
        snap = other.snapshot()
        with self._lock:
            self.prompt_tokens += snap["prompt_tokens"]
            self.completion_tokens += snap["completion_tokens"]
            self.calls += snap["calls"]

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens,
                "calls": self.calls,
            }


@runtime_checkable
class ChatBackend(Protocol):
    usage: BackendUsage

    def chat(self, request: ChatRequest) -> str: ...


@runtime_checkable
class EmbeddingBackend(Protocol):
    dimensions: int

    def embed(self, text: str) -> np.ndarray: ...


class JudgeBackend(Protocol):
    def judge(self, question: str, reference: str, candidate, rubric: str): ...


def call_with_retries(
    fn: Callable[[], Any],
    *,
    max_retries: int = 3,
    base_delay: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> Any:
    """Run fn, retrying retryable backend errors with exponential backoff."""
    attempt = 0
    while True:
        try:
            return fn()
        except BackendError as exc:
            if not exc.retryable or attempt >= max_retries:
                raise
            delay = base_delay * (2**attempt)
            logger.warning("retryable backend error (%s); retry in %.1fs", exc, delay)
            sleep(delay)
            attempt += 1


def chat_json(backend: ChatBackend, request: ChatRequest) -> Any:
    """Chat expecting a JSON body; one reprompt on a parse failure."""
    text = backend.chat(request)
    try:
        return _parse_json_body(text)
    except ValueError:
        logger.warning(
            "unparseable JSON from template %r; reprompting once", request.template_id
        )
    text = backend.chat(request)
    try:
        return _parse_json_body(text)
    except ValueError as exc:
        raise BadResponse(
            f"template {request.template_id!r} returned unparseable JSON: {text[:200]!r}"
        ) from exc


def _parse_json_body(text: str) -> Any:
    """Parse a JSON body, tolerating a fenced code block around it."""
    stripped = text.strip()
    if stripped.startswith("```"):
        stripped = stripped.strip("`")
        if stripped.startswith("json"):
            stripped = stripped[4:]
        stripped = stripped.strip()
    try:
        return json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise ValueError(str(exc)) from exc


def approx_tokens(text: str) -> int:
    """Whitespace word count; the accounting unit for offline backends."""
    return len(text.split())
