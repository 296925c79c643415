"""Chat-completion backends: a remote OpenAI-compatible client and a scripted
deterministic stand-in for tests.

Every call is journaled (digest, backend, latency, outcome) to an append-only
JSON-lines run log. Credentials are read from the environment at call time and
never appear in journal records.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import requests

from .config import BackendSettings

VALID_ROLES = ("system", "user", "assistant")
DEFAULT_TEMPERATURE = 0.2


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in VALID_ROLES:
            raise ValueError(f"role must be one of {VALID_ROLES}, got {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = 1024
    request_tag: str = ""

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be nonempty")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError(
                f"first message role must be system or user,"
                f" got {self.messages[0].role!r}"
            )
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")

    def user_content(self) -> str:
        return "\n".join(m.content for m in self.messages if m.role == "user")


@dataclass(frozen=True)
class ChatCompletion:
    text: str
    latency_ms: float
    backend_id: str
    token_usage: dict[str, int] | None = None

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError(f"latency_ms must be nonnegative, got {self.latency_ms}")


def request_digest(request: ChatRequest) -> str:
    """sha256 hex over the request's user-message content."""
    return hashlib.sha256(request.user_content().encode("utf-8")).hexdigest()


class GatewayError(Exception):
    """Base for all backend failures; `outcome` names the failure class."""

    outcome = "error"
    retryable = False

    def __init__(self, message: str, latency_ms: float = 0.0) -> None:
        super().__init__(message)
        self.latency_ms = latency_ms


class TransportError(GatewayError):
    outcome = "transport_error"
    retryable = True


class RequestTimeout(GatewayError):
    outcome = "timeout"
    retryable = True


class HttpStatusError(GatewayError):
    def __init__(self, status: int, message: str, latency_ms: float = 0.0) -> None:
        super().__init__(message, latency_ms)
        self.status = status

    @property
    def outcome(self) -> str:  # type: ignore[override]
        return f"http_{self.status}"

    @property
    def retryable(self) -> bool:  # type: ignore[override]
        return self.status == 429


class AuthError(HttpStatusError):
    retryable = False

    def __init__(self, message: str, status: int = 401, latency_ms: float = 0.0) -> None:
        super().__init__(status, message, latency_ms)

    @property
    def outcome(self) -> str:  # type: ignore[override]
        return "auth_error"


class ScriptMissError(GatewayError):
    outcome = "script_miss"


class RetryExhaustedError(GatewayError):
    outcome = "retry_exhausted"

    def __init__(self, attempts: int, last: GatewayError) -> None:
        super().__init__(f"gave up after {attempts} attempts: {last}")
        self.attempts = attempts
        self.last = last


class Backend(Protocol):
    backend_id: str

    def complete(self, request: ChatRequest) -> ChatCompletion: ...


class RunJournal:
    """Append-only JSON-lines log shared by all calls of one run."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()

    def record(self, entry: dict[str, Any]) -> None:
        line = json.dumps(entry, ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    def log_call(
        self,
        request_tag: str,
        digest: str,
        backend_id: str,
        latency_ms: float,
        outcome: str,
    ) -> None:
        self.record(
            {
                "kind": "call",
                "request_tag": request_tag,
                "digest": digest,
                "backend_id": backend_id,
                "latency_ms": latency_ms,
                "outcome": outcome,
            }
        )

    def log_case(self, case_key: str, local_ms: float, **extra: Any) -> None:
        entry: dict[str, Any] = {"kind": "case", "case_key": case_key}
        entry.update(extra)
        entry["local_ms"] = local_ms
        self.record(entry)


def read_journal(path: str | Path) -> list[dict[str, Any]]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


class ScriptedBackend:
    """Replays fixture replies keyed by the request's user content.

    Each fixture entry is {"match": ..., "reply": ..., "latency_ms"?: ...}.
    A match fires when the entry's match string equals the request digest or
    is a prefix of the user content; the first matching entry wins. A request
    no entry matches is a hard error: tests must never get invented replies.
    """

    def __init__(
        self,
        entries: Sequence[dict[str, Any]],
        backend_id: str = "scripted",
    ) -> None:
        for i, entry in enumerate(entries):
            if "match" not in entry or "reply" not in entry:
                raise ValueError(f"script entry {i} needs 'match' and 'reply' keys")
        self.entries = list(entries)
        self.backend_id = backend_id
        self._lock = threading.Lock()
        self.calls: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatCompletion:
        with self._lock:
            self.calls.append(request)
        content = request.user_content()
        digest = request_digest(request)
        for entry in self.entries:
            match = entry["match"]
            if match == digest or content.startswith(match):
                return ChatCompletion(
                    text=entry["reply"],
                    latency_ms=float(entry.get("latency_ms", 0.0)),
                    backend_id=self.backend_id,
                )
        head = content[:80].replace("\n", " ")
        raise ScriptMissError(
            f"no script entry matches request (digest {digest}, content {head!r}...)"
        )


def load_script(path: str | Path) -> ScriptedBackend:
    with open(path, encoding="utf-8") as handle:
        entries = json.load(handle)
    if not isinstance(entries, list):
        raise ValueError(f"script fixture {path} must be a JSON array")
    return ScriptedBackend(entries)


def _default_transport(
    url: str, headers: dict[str, str], payload: dict[str, Any], timeout_s: float
) -> tuple[int, Any]:
    response = requests.post(url, headers=headers, json=payload, timeout=timeout_s)
    try:
        body = response.json()
    except ValueError:
        body = response.text
    return response.status_code, body


class RemoteBackend:
    """OpenAI-compatible chat-completions client.

    The bearer token comes from the environment variable named in the
    settings; outbound concurrency is bounded per backend instance.
    """

    def __init__(
        self,
        settings: BackendSettings,
        transport: Callable[..., tuple[int, Any]] | None = None,
    ) -> None:
        self.settings = settings
        self.backend_id = settings.model_id or "remote"
        self._transport = transport or _default_transport
        self._gate = threading.Semaphore(settings.max_concurrent)

    def _api_key(self) -> str:
        env = self.settings.api_key_env or ""
        key = os.environ.get(env)
        if not key:
            raise AuthError(f"credential environment variable {env!r} is not set")
        return key

    def complete(self, request: ChatRequest) -> ChatCompletion:
        key = self._api_key()
        url = f"{str(self.settings.base_url).rstrip('/')}/chat/completions"
        payload = {
            "model": request.model_id or self.settings.model_id,
            "messages": [
                {"role": m.role, "content": m.content} for m in request.messages
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {key}"}
        start = time.monotonic()
        with self._gate:
            try:
                status, body = self._transport(
                    url, headers, payload, self.settings.timeout_s
                )
            except requests.Timeout as exc:
                raise RequestTimeout(
                    f"request timed out after {self.settings.timeout_s} s",
                    latency_ms=(time.monotonic() - start) * 1000,
                ) from exc
            except requests.RequestException as exc:
                raise TransportError(
                    f"transport failure: {exc}",
                    latency_ms=(time.monotonic() - start) * 1000,
                ) from exc
        latency_ms = (time.monotonic() - start) * 1000

        if status in (401, 403):
            raise AuthError(
                f"authentication rejected (HTTP {status})",
                status=status,
                latency_ms=latency_ms,
            )
        if not 200 <= status < 300:
            raise HttpStatusError(status, f"HTTP {status}", latency_ms=latency_ms)
        try:
            text = body["choices"][0]["message"]["content"]
        except (TypeError, KeyError, IndexError) as exc:
            raise TransportError(
                f"malformed completion body: {exc!r}", latency_ms=latency_ms
            ) from exc
        usage = body.get("usage") if isinstance(body, dict) else None
        token_usage = None
        if isinstance(usage, dict):
            token_usage = {
                "prompt": int(usage.get("prompt_tokens", 0)),
                "completion": int(usage.get("completion_tokens", 0)),
            }
        return ChatCompletion(
            text=text,
            latency_ms=latency_ms,
            backend_id=self.backend_id,
            token_usage=token_usage,
        )


def complete(
    backend: Backend, request: ChatRequest, journal: RunJournal | None = None
) -> ChatCompletion:
    """One backend call, journaled whatever the outcome."""
    digest = request_digest(request)
    try:
        completion = backend.complete(request)
    except GatewayError as exc:
        if journal is not None:
            journal.log_call(
                request.request_tag, digest, backend.backend_id,
                exc.latency_ms, exc.outcome,
            )
        raise
    if journal is not None:
        journal.log_call(
            request.request_tag, digest, completion.backend_id,
            completion.latency_ms, "ok",
        )
    return completion


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay_s: float = 0.05
    max_delay_s: float = 2.0

    def delay(self, attempt: int) -> float:
        """Exponential backoff before retry `attempt` (1-based)."""
        return min(self.base_delay_s * (2 ** (attempt - 1)), self.max_delay_s)


def with_retry(
    backend: Backend,
    request: ChatRequest,
    policy: RetryPolicy = RetryPolicy(),
    journal: RunJournal | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> ChatCompletion:
    """Call with bounded retries on transient failures only.

    Transport failures, timeouts, and HTTP 429 are retried with exponential
    backoff; everything else propagates immediately. The returned completion
    aggregates latency across all attempts.
    """
    if policy.max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    wasted_ms = 0.0
    last: GatewayError | None = None
    for attempt in range(1, policy.max_attempts + 1):
        try:
            completion = complete(backend, request, journal)
        except GatewayError as exc:
            if not exc.retryable:
                raise
            wasted_ms += exc.latency_ms
            last = exc
            if attempt < policy.max_attempts:
                sleep(policy.delay(attempt))
            continue
        if wasted_ms:
            completion = replace(
                completion, latency_ms=completion.latency_ms + wasted_ms
            )
        return completion
    assert last is not None
    raise RetryExhaustedError(policy.max_attempts, last)
