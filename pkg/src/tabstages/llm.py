"""Uniform text-generation interface with call-kind accounting.

Every request is self-contained: the engine clears history before each plan
and each code generation, so an exchange always carries its full context.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from enum import Enum
from typing import Callable, Protocol

import requests

from .errors import BackendError, FixtureError


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.1
    top_p: float = 0.9
    max_tokens: int = 2048
    n_samples: int = 1

    def __post_init__(self) -> None:
        if self.n_samples != 1:
            raise ValueError("the engine always requests exactly one sample")


class CallKind(str, Enum):
    PLANNING = "planning"
    CODE_GENERATION = "code_generation"
    RE_GENERATION = "re_generation"


@dataclass(frozen=True)
class ChatExchange:
    """Role-tagged messages forming one self-contained request."""

    messages: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("an exchange needs at least one message")
        for role, _ in self.messages:
            if role not in ("system", "user", "assistant"):
                raise ValueError(f"unknown role {role!r}")
        if self.messages[-1][0] != "user":
            raise ValueError("the last message must be the user turn")

    @classmethod
    def make(cls, user: str, system: str | None = None) -> "ChatExchange":
        messages: list[tuple[str, str]] = []
        if system is not None:
            messages.append(("system", system))
        messages.append(("user", user))
        return cls(messages=tuple(messages))

    def rendered(self) -> str:
        return "\n".join(f"{role}: {text}" for role, text in self.messages)


def exchange_fingerprint(exchange: ChatExchange) -> str:
    """Stable hash of an exchange, used by keyed scripted backends."""
    return hashlib.sha256(exchange.rendered().encode("utf-8")).hexdigest()[:16]


@dataclass
class LogEntry:
    kind: CallKind
    stage: str
    prompt_chars: int
    response_chars: int
    latency_s: float


class GenerationLog:
    """Per-sample counters and call records, one per LLM invocation."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts = {kind: 0 for kind in CallKind}
        self.entries: list[LogEntry] = []

    def record(self, entry: LogEntry) -> None:
        with self._lock:
            self._counts[entry.kind] += 1
            self.entries.append(entry)

    def snapshot(self) -> tuple[int, int, int]:
        with self._lock:
            return (
                self._counts[CallKind.PLANNING],
                self._counts[CallKind.CODE_GENERATION],
                self._counts[CallKind.RE_GENERATION],
            )

    @property
    def total_calls(self) -> int:
        return sum(self.snapshot())


def log_snapshot(log: GenerationLog) -> tuple[int, int, int]:
    """Current (planning, code_generation, re_generation) counts."""
    return log.snapshot()


class Backend(Protocol):
    def generate(self, exchange: ChatExchange, params: GenerationParams) -> str: ...


class ScriptedBackend:
    """Deterministic backend for tests and replayable runs.

    Serves either an ordered response queue or a map keyed by exchange
    fingerprint. Requests are recorded for later inspection.
    """

    def __init__(
        self,
        queue: list[str] | None = None,
        keyed: dict[str, str] | None = None,
    ) -> None:
        if (queue is None) == (keyed is None):
            raise ValueError("provide exactly one of queue/keyed")
        self._lock = threading.Lock()
        self._queue = list(queue) if queue is not None else None
        self._keyed = dict(keyed) if keyed is not None else None
        self.requests: list[ChatExchange] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        with Path(path).open("r", encoding="utf-8") as fh:
            payload = json.load(fh)
        responses = payload["responses"]
        if isinstance(responses, list):
            return cls(queue=responses)
        return cls(keyed=responses)

    def generate(self, exchange: ChatExchange, params: GenerationParams) -> str:
        with self._lock:
            self.requests.append(exchange)
            if self._queue is not None:
                if not self._queue:
                    raise FixtureError("scripted response queue exhausted")
                return self._queue.pop(0)
            key = exchange_fingerprint(exchange)
            assert self._keyed is not None
            if key not in self._keyed:
                raise FixtureError(f"no scripted response for fingerprint {key}")
            return self._keyed[key]


class HttpBackend:
    """Chat-completions backend over HTTP with bounded transport retries.

    Transport failures are retried up to three times with exponential
    backoff and then surface as BackendError: infrastructure noise must not
    enter the code-error regeneration loop.
    """

    MAX_ATTEMPTS = 3
    RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

    def __init__(
        self,
        endpoint: str,
        model: str,
        token_env: str = "LLM_API_TOKEN",
        request_timeout: float = 120.0,
        transport: Callable[..., requests.Response] | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.token_env = token_env
        self.request_timeout = request_timeout
        self._transport = transport or requests.post
        self._sleep = sleeper

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def generate(self, exchange: ChatExchange, params: GenerationParams) -> str:
        payload = {
            "model": self.model,
            "messages": [
                {"role": role, "content": text} for role, text in exchange.messages
            ],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "n": params.n_samples,
        }
        last_error = "unknown transport failure"
        for attempt in range(self.MAX_ATTEMPTS):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                response = self._transport(
                    f"{self.endpoint}/chat/completions",
                    json=payload,
                    headers=self._headers(),
                    timeout=self.request_timeout,
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                continue
            if response.status_code in self.RETRYABLE_STATUS:
                last_error = f"server returned {response.status_code}"
                continue
            if response.status_code != 200:
                raise BackendError(
                    f"backend rejected request: {response.status_code} {response.text[:200]}"
                )
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise BackendError(f"malformed backend response: {exc}") from exc
        raise BackendError(f"backend unreachable after {self.MAX_ATTEMPTS} attempts: {last_error}")


def complete(
    backend: Backend,
    exchange: ChatExchange,
    call_kind: CallKind,
    log: GenerationLog,
    params: GenerationParams | None = None,
    stage: str = "",
) -> str:
    """Run one attributed LLM call and record it in the per-sample log."""
    params = params or GenerationParams()
    started = time.monotonic()
    response = backend.generate(exchange, params)
    log.record(
        LogEntry(
            kind=call_kind,
            stage=stage,
            prompt_chars=len(exchange.rendered()),
            response_chars=len(response),
            latency_s=time.monotonic() - started,
        )
    )
    return response
