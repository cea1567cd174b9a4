"""Completion clients: live OpenAI-compatible endpoint plus two mock backends."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .corpus import CorpusError, Question
from .prompts import DEFAULT_SENTINEL, extract_task


class Backend(str, Enum):
    LIVE = "live"
    MOCK_RULE = "mock_rule"
    MOCK_SCRIPT = "mock_script"


class BudgetError(RuntimeError):
    """Prompt exceeds the configured token budget."""


class TransportError(RuntimeError):
    """Live endpoint failed after exhausting retries, or returned garbage."""


class ScriptError(RuntimeError):
    """Scripted backend has no response for a requested exchange."""


class RuleError(RuntimeError):
    """Rule backend could not interpret a prompt."""


def count_tokens(text: str) -> int:
    """Whitespace token count, the accounting unit for budgets and reports."""
    return len(text.split())


@dataclass(frozen=True)
class CompletionRequest:
    """One prompt plus routing metadata (mock backends key on the metadata)."""

    prompt_text: str
    max_response_tokens: int = 64
    temperature: float = 0.0
    question_id: str | None = None
    exchange_key: str | None = None


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    backend: Backend


class UsageLedger:
    """Thread-safe running totals of token usage across calls."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls = 0
        self.prompt_tokens = 0
        self.completion_tokens = 0

    def add(self, prompt_tokens: int, completion_tokens: int) -> None:
        with self._lock:
            self.calls += 1
            self.prompt_tokens += prompt_tokens
            self.completion_tokens += completion_tokens

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "calls": self.calls,
                "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens,
                "total_tokens": self.prompt_tokens + self.completion_tokens,
            }


class CompletionClient:
    """Base class handling budget checks and usage accounting."""

    backend: Backend

    def __init__(self, max_prompt_tokens: int | None = None) -> None:
        self.max_prompt_tokens = max_prompt_tokens
        self.ledger = UsageLedger()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        if not request.prompt_text.strip():
            raise ValueError("prompt_text must be non-empty")
        prompt_tokens = count_tokens(request.prompt_text)
        if self.max_prompt_tokens is not None and prompt_tokens > self.max_prompt_tokens:
            raise BudgetError(
                f"prompt is {prompt_tokens} tokens, over the budget of "
                f"{self.max_prompt_tokens}"
            )
        text, reported_prompt, reported_completion = self._respond(request)
        response = CompletionResponse(
            text=text,
            prompt_tokens=reported_prompt if reported_prompt is not None else prompt_tokens,
            completion_tokens=(
                reported_completion if reported_completion is not None else count_tokens(text)
            ),
            backend=self.backend,
        )
        self.ledger.add(response.prompt_tokens, response.completion_tokens)
        return response

    def _respond(self, request: CompletionRequest) -> tuple[str, int | None, int | None]:
        raise NotImplementedError


class RuleClient(CompletionClient):
    """Deterministic mock: answers with the first gold alias found verbatim
    (case-insensitively) in any passage of the prompt, else the sentinel."""

    backend = Backend.MOCK_RULE

    def __init__(
        self,
        questions: Iterable[Question],
        sentinel: str = DEFAULT_SENTINEL,
        max_prompt_tokens: int | None = None,
    ) -> None:
        super().__init__(max_prompt_tokens)
        self.sentinel = sentinel
        self._by_text: dict[str, Question] = {}
        for question in questions:
            self._by_text[question.text] = question

    def _respond(self, request: CompletionRequest) -> tuple[str, int | None, int | None]:
        task = extract_task(request.prompt_text)
        if task.question is None:
            raise RuleError("prompt has no recognizable question line")
        question = self._by_text.get(task.question)
        if question is None:
            raise RuleError(f"question text is not registered with the rule backend: {task.question!r}")
        haystacks = [p.lower() for p in task.passages]
        for alias in question.gold_answers:
            needle = alias.lower()
            if any(needle in haystack for haystack in haystacks):
                return alias, None, None
        return self.sentinel, None, None


class ScriptClient(CompletionClient):
    """Replay mock: responses looked up by (question_id, exchange_key)."""

    backend = Backend.MOCK_SCRIPT

    def __init__(
        self,
        script: Mapping[tuple[str, str], str],
        max_prompt_tokens: int | None = None,
    ) -> None:
        super().__init__(max_prompt_tokens)
        self._script = dict(script)

    def _respond(self, request: CompletionRequest) -> tuple[str, int | None, int | None]:
        if request.question_id is None or request.exchange_key is None:
            raise ScriptError(
                "scripted backend needs question_id and exchange_key on the request"
            )
        key = (request.question_id, request.exchange_key)
        if key not in self._script:
            raise ScriptError(
                f"no scripted response for question {request.question_id!r}, "
                f"exchange {request.exchange_key!r}"
            )
        return self._script[key], None, None


def load_script(path: str | Path) -> dict[tuple[str, str], str]:
    """Load a response script from JSONL rows of
    {question_id, exchange_key, response}."""
    script: dict[tuple[str, str], str] = {}
    path = Path(path)
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("question_id", "exchange_key", "response"):
                if key not in record:
                    raise CorpusError(f"{path}:{lineno}: missing field {key!r}")
            pair = (str(record["question_id"]), str(record["exchange_key"]))
            if pair in script:
                raise CorpusError(
                    f"{path}:{lineno}: duplicate script entry for {pair!r}"
                )
            script[pair] = str(record["response"])
    return script


class ResponseCache:
    """Append-only JSONL cache keyed by a hash of (model, prompt).

    Lets an interrupted live run resume without re-billing completed calls.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[str, int, int]] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    record = json.loads(line)
                    self._entries[record["key"]] = (
                        record["text"],
                        int(record["prompt_tokens"]),
                        int(record["completion_tokens"]),
                    )

    @staticmethod
    def key_for(model: str, prompt_text: str) -> str:
        digest = hashlib.sha256()
        digest.update(model.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(prompt_text.encode("utf-8"))
        return digest.hexdigest()

    def get(self, key: str) -> tuple[str, int, int] | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, text: str, prompt_tokens: int, completion_tokens: int) -> None:
        record = {
            "key": key,
            "text": text,
            "prompt_tokens": prompt_tokens,
            "completion_tokens": completion_tokens,
        }
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = (text, prompt_tokens, completion_tokens)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(record, sort_keys=True) + "\n")


# A transport takes the JSON payload and returns (status_code, parsed body).
Transport = Callable[[dict], tuple[int, dict]]

_RETRY_DELAYS = (1.0, 2.0, 4.0)


def _requests_transport(endpoint: str, api_key: str | None, timeout: float) -> Transport:
    import requests

    def send(payload: dict) -> tuple[int, dict]:
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            reply = requests.post(endpoint, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            raise TransportError(f"request to {endpoint} failed: {exc}") from exc
        try:
            body = reply.json()
        except ValueError:
            body = {}
        return reply.status_code, body

    return send


class LiveClient(CompletionClient):
    """Client for an OpenAI-compatible chat completions endpoint.

    Retries transient failures (transport errors, HTTP 429 and 5xx) three
    times with 1s/2s/4s backoff; other HTTP statuses fail immediately. At
    most max_in_flight requests run concurrently.
    """

    backend = Backend.LIVE

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        max_prompt_tokens: int | None = None,
        cache: ResponseCache | None = None,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        super().__init__(max_prompt_tokens)
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        self.model = model
        self.cache = cache
        self._transport = transport or _requests_transport(endpoint, api_key, timeout)
        self._sleep = sleep
        self._gate = threading.Semaphore(max_in_flight)

    def _respond(self, request: CompletionRequest) -> tuple[str, int | None, int | None]:
        cache_key = None
        if self.cache is not None:
            cache_key = ResponseCache.key_for(self.model, request.prompt_text)
            hit = self.cache.get(cache_key)
            if hit is not None:
                return hit
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "max_tokens": request.max_response_tokens,
        }
        status, body = self._send_with_retries(payload)
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion body (status {status})") from exc
        usage = body.get("usage") or {}
        prompt_tokens = usage.get("prompt_tokens")
        completion_tokens = usage.get("completion_tokens")
        if self.cache is not None and cache_key is not None:
            self.cache.put(
                cache_key,
                text,
                prompt_tokens if prompt_tokens is not None else count_tokens(request.prompt_text),
                completion_tokens if completion_tokens is not None else count_tokens(text),
            )
        return text, prompt_tokens, completion_tokens

    def _send_with_retries(self, payload: dict) -> tuple[int, dict]:
        failure: str = "no attempt made"
        for attempt in range(1 + len(_RETRY_DELAYS)):
            if attempt > 0:
                self._sleep(_RETRY_DELAYS[attempt - 1])
            try:
                with self._gate:
                    status, body = self._transport(payload)
            except TransportError as exc:
                failure = str(exc)
                continue
            if status == 429 or status >= 500:
                failure = f"HTTP {status}"
                continue
            if status >= 400:
                raise TransportError(f"HTTP {status} from completion endpoint: {body}")
            return status, body
        raise TransportError(f"gave up after {1 + len(_RETRY_DELAYS)} attempts: {failure}")
