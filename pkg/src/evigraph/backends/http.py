"""Live HTTP clients for chat-completions-style and embedding endpoints.

Wire shapes:
  chat:   POST {model, messages: [{role, content}], temperature}
          -> {choices: [{message: {content}}], usage: {prompt_tokens, completion_tokens}}
  embed:  POST {model, input} -> {data: [{embedding: [...]}]}

API keys come from the environment only (never config files).  Transient
transport failures (timeouts, 429) retry with exponential backoff up to a
configured cap; malformed bodies surface immediately as BadResponse.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from typing import Callable

import httpx
import numpy as np

from ..errors import BadResponse, RateLimited, Timeout, UnparseableVerdict
from .base import (
    BackendUsage,
    ChatBackend,
    ChatRequest,
    CompareVerdict,
    KeypointJudgement,
    approx_tokens,
    call_with_retries,
    chat_json,
)

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "EVIGRAPH_API_KEY"


class HttpChatBackend:
    def __init__(
        self,
        url: str,
        model: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        max_retries: int = 3,
        base_delay: float = 0.5,
        timeout: float = 60.0,
        max_in_flight: int = 8,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = url
        self.model = model
        self.max_retries = max_retries
        self.base_delay = base_delay
        self._sleep = sleep
        self._limiter = threading.BoundedSemaphore(max_in_flight)
        self.usage = BackendUsage()
        headers = {}
        api_key = os.environ.get(api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def chat(self, request: ChatRequest) -> str:
        system, user = request.render()
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": user})
        body = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
        }

        def attempt() -> str:
            try:
                with self._limiter:
                    response = self._client.post(self.url, json=body)
            except httpx.TimeoutException as exc:
                raise Timeout(str(exc)) from exc
            except httpx.TransportError as exc:
                raise Timeout(str(exc)) from exc
            if response.status_code == 429:
                raise RateLimited("rate limited by endpoint")
            if response.status_code >= 500:
                raise Timeout(f"server error {response.status_code}")
            if response.status_code != 200:
                raise BadResponse(f"status {response.status_code}: {response.text[:200]}")
            try:
                payload = response.json()
                content = payload["choices"][0]["message"]["content"]
            except (ValueError, LookupError, TypeError) as exc:
                raise BadResponse(f"malformed chat body: {response.text[:200]}") from exc
            usage = payload.get("usage") or {}
            self.usage.add(
                int(usage.get("prompt_tokens", approx_tokens(system) + approx_tokens(user))),
                int(usage.get("completion_tokens", approx_tokens(content))),
            )
            return content

        return call_with_retries(
            attempt,
            max_retries=self.max_retries,
            base_delay=self.base_delay,
            sleep=self._sleep,
        )

    def close(self) -> None:
        self._client.close()


class HttpEmbeddingBackend:
    def __init__(
        self,
        url: str,
        model: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        max_retries: int = 3,
        base_delay: float = 0.5,
        timeout: float = 30.0,
        max_in_flight: int = 8,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = url
        self.model = model
        self.max_retries = max_retries
        self.base_delay = base_delay
        self._sleep = sleep
        self._limiter = threading.BoundedSemaphore(max_in_flight)
        self.dimensions = 0  # learned from the first response
        self.usage = BackendUsage()
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        headers = {}
        api_key = os.environ.get(api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        with self._lock:
            hit = self._cache.get(text)
        if hit is not None:
            return hit

        def attempt() -> np.ndarray:
            try:
                with self._limiter:
                    response = self._client.post(
                        self.url, json={"model": self.model, "input": text}
                    )
            except httpx.TimeoutException as exc:
                raise Timeout(str(exc)) from exc
            except httpx.TransportError as exc:
                raise Timeout(str(exc)) from exc
            if response.status_code == 429:
                raise RateLimited("rate limited by endpoint")
            if response.status_code >= 500:
                raise Timeout(f"server error {response.status_code}")
            if response.status_code != 200:
                raise BadResponse(f"status {response.status_code}: {response.text[:200]}")
            try:
                values = response.json()["data"][0]["embedding"]
                vec = np.asarray(values, dtype=float)
            except (ValueError, LookupError, TypeError) as exc:
                raise BadResponse(f"malformed embedding body: {response.text[:200]}") from exc
            norm = np.linalg.norm(vec)
            if norm == 0 or vec.ndim != 1:
                raise BadResponse("embedding is zero or mis-shaped")
            return vec / norm

        vec = call_with_retries(
            attempt,
            max_retries=self.max_retries,
            base_delay=self.base_delay,
            sleep=self._sleep,
        )
        vec.setflags(write=False)
        with self._lock:
            if not self.dimensions:
                self.dimensions = int(vec.shape[0])
            self._cache[text] = vec
        self.usage.add(approx_tokens(text), 0)
        return vec

    def close(self) -> None:
        self._client.close()


class LlmJudge:
    """Judging rubrics implemented over any chat backend."""

    def __init__(self, chat_backend: ChatBackend):
        self.backend = chat_backend

    def judge(self, question: str, reference: str, candidate, rubric: str):
        if rubric == "keypoint-coverage":
            payload = self._ask(
                "judge_keypoints",
                {"question": question, "keypoints": reference, "candidate": candidate},
            )
            if not isinstance(payload, list):
                raise UnparseableVerdict("keypoint verdict is not a list")
            try:
                return [
                    KeypointJudgement(
                        str(row["keypoint"]), bool(row["covered"]), bool(row["contradicted"])
                    )
                    for row in payload
                ]
            except (KeyError, TypeError) as exc:
                raise UnparseableVerdict(str(exc)) from exc
        if rubric in ("recall-compare", "precision-compare"):
            a_text, b_text = candidate
            template = (
                "judge_compare_recall"
                if rubric == "recall-compare"
                else "judge_compare_precision"
            )
            payload = self._ask(
                template,
                {
                    "question": question,
                    "reference": reference,
                    "answer_a": a_text,
                    "answer_b": b_text,
                },
            )
            winner = str(payload.get("winner", "")).strip().lower() if isinstance(payload, dict) else ""
            if winner == "a":
                return CompareVerdict("win")
            if winner == "b":
                return CompareVerdict("loss")
            if winner == "tie":
                return CompareVerdict("tie")
            raise UnparseableVerdict(f"bad winner {payload!r}")
        if rubric == "usefulness-0-10":
            payload = self._ask(
                "judge_usefulness", {"question": question, "candidate": candidate}
            )
            try:
                score = int(payload["score"])
            except (KeyError, TypeError, ValueError) as exc:
                raise UnparseableVerdict(str(exc)) from exc
            return max(0, min(10, score))
        raise ValueError(f"unknown rubric {rubric!r}")

    def _ask(self, template_id: str, bindings: dict[str, str]):
        request = ChatRequest(template_id=template_id, bindings=bindings)
        try:
            return chat_json(self.backend, request)
        except BadResponse as exc:
            raise UnparseableVerdict(str(exc)) from exc
