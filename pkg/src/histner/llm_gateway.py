"""Chat-completion access with retries, rate limiting and a response cache.

The cache is an append-only JSON-lines store keyed by (prompt fingerprint,
run index, model id); a warm cache makes reruns free and deterministic.
Mock providers (gold echo, corrupt echo, scripted) make the whole pipeline
runnable offline.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import requests

from .corpus import Dataset
from .errors import (
    MalformedProviderReply,
    ProviderUnavailable,
    ScriptMiss,
)
from .prompting import RenderedPrompt, annotation_pairs, serialize_annotation

log = logging.getLogger("histner.gateway")


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str = ""
    model_id: str = "mock"
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 60.0
    requests_per_minute: int = 60
    api_key_env: str = "HISTNER_API_KEY"
    retry_backoff: float = 1.0


@dataclass(frozen=True)
class LlmExchange:
    prompt_fingerprint: str
    run_index: int
    raw_response: str
    model_id: str
    latency: float
    created_at: str

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.prompt_fingerprint, self.run_index, self.model_id)


@dataclass(frozen=True)
class RequestMeta:
    """Provenance travelling with each provider call (used by mocks and audit)."""

    doc_id: str
    run_index: int
    fingerprint: str


class TransientProviderFailure(Exception):
    """Internal retry signal: timeout, 429 or 5xx."""


class ExchangeStore:
    """Append-only JSONL store of exchanges, at most one entry per key."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, int, str], LlmExchange] = {}
        if self.path.exists():
            for line_no, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                    exchange = LlmExchange(
                        prompt_fingerprint=raw["prompt_fingerprint"],
                        run_index=int(raw["run_index"]),
                        raw_response=raw["raw_response"],
                        model_id=raw["model_id"],
                        latency=float(raw.get("latency", 0.0)),
                        created_at=raw.get("created_at", ""),
                    )
                except (ValueError, KeyError, TypeError):
                    log.warning("%s:%d: skipping unreadable cache line", self.path, line_no)
                    continue
                self._entries.setdefault(exchange.key, exchange)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, fingerprint: str, run_index: int, model_id: str) -> LlmExchange | None:
        return self._entries.get((fingerprint, run_index, model_id))

    def put(self, exchange: LlmExchange) -> LlmExchange:
        """Store a new exchange; an existing entry for the key wins and is returned."""
        with self._lock:
            existing = self._entries.get(exchange.key)
            if existing is not None:
                return existing
            self._entries[exchange.key] = exchange
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "prompt_fingerprint": exchange.prompt_fingerprint,
                    "run_index": exchange.run_index,
                    "model_id": exchange.model_id,
                    "raw_response": exchange.raw_response,
                    "latency": exchange.latency,
                    "created_at": exchange.created_at,
                }, ensure_ascii=False) + "\n")
            return exchange


class RateLimiter:
    """Sliding-window limiter: at most `rate` acquisitions per 60 seconds."""

    def __init__(self, rate: int, clock=time.monotonic, sleep=time.sleep):
        if rate < 1:
            raise ValueError("rate must be >= 1")
        self.rate = rate
        self.clock = clock
        self.sleep = sleep
        self._lock = threading.Lock()
        self._starts: deque[float] = deque()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                while self._starts and now - self._starts[0] >= 60.0:
                    self._starts.popleft()
                if len(self._starts) < self.rate:
                    self._starts.append(now)
                    return
                wait = 60.0 - (now - self._starts[0])
            # Lower bound keeps progress when float resolution swallows a
            # vanishing wait (large clock values, tiny remainder).
            self.sleep(max(wait, 1e-3))


# ----------------------------------------------------------------------
# Providers

class HttpChatProvider:
    """JSON chat-completion provider: single user message, text reply."""

    def __init__(self, config: ProviderConfig, api_key: str | None = None):
        if not config.endpoint:
            raise ValueError("http provider needs an endpoint")
        self.config = config
        self._api_key = api_key
        self.model_id = config.model_id

    def send(self, text: str, meta: RequestMeta) -> str:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = {
            "model": self.config.model_id,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": text}],
        }
        try:
            response = requests.post(self.config.endpoint, json=payload,
                                     headers=headers, timeout=self.config.timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise TransientProviderFailure(str(exc)) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderFailure(f"HTTP {response.status_code}")
        if response.status_code != 200:
            raise MalformedProviderReply(f"HTTP {response.status_code}: {response.text[:200]}")
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedProviderReply("reply carries no message text") from exc
        if not isinstance(content, str):
            raise MalformedProviderReply(f"non-text payload of type {type(content).__name__}")
        return content


class GoldEchoProvider:
    """Returns the target document's gold annotation, serialized.

    The perfect-score path: every reply parses and aligns back to gold.
    """

    model_id = "mock-gold-echo"

    def __init__(self, dataset: Dataset):
        self._replies = {
            d.doc_id: serialize_annotation(annotation_pairs(d, d.gold))
            for d in dataset.documents
        }

    def send(self, text: str, meta: RequestMeta) -> str:
        try:
            return self._replies[meta.doc_id]
        except KeyError:
            raise ScriptMiss(f"gold echo knows no document {meta.doc_id!r}") from None


class CorruptEchoProvider(GoldEchoProvider):
    """Gold echo wrapped in prose, a decoy bracket, code fences, single
    quotes and a trailing comma, to exercise parser recovery."""

    model_id = "mock-corrupt"

    def send(self, text: str, meta: RequestMeta) -> str:
        payload = super().send(text, meta)
        sloppy = payload.replace('"', "'")
        if sloppy.endswith(")]"):
            sloppy = sloppy[:-1] + ",]"
        return (
            "Sure! I analyzed [the passage] carefully.\n"
            "```python\n"
            f"{sloppy}\n"
            "```\n"
            "Let me know if you need anything else."
        )


class ScriptedProvider:
    """Replays a fixed fingerprint -> response map; misses raise ScriptMiss."""

    def __init__(self, script: dict[str, str], model_id: str = "mock-scripted"):
        self.script = dict(script)
        self.model_id = model_id

    def send(self, text: str, meta: RequestMeta) -> str:
        try:
            return self.script[meta.fingerprint]
        except KeyError:
            raise ScriptMiss(f"no scripted reply for fingerprint {meta.fingerprint[:12]}") from None


def mock_provider(mode: str, dataset: Dataset | None = None,
                  script: dict[str, str] | None = None):
    if mode == "gold_echo":
        if dataset is None:
            raise ValueError("gold_echo mode needs a dataset")
        return GoldEchoProvider(dataset)
    if mode == "corrupt":
        if dataset is None:
            raise ValueError("corrupt mode needs a dataset")
        return CorruptEchoProvider(dataset)
    if mode == "scripted":
        if script is None:
            raise ValueError("scripted mode needs a script")
        return ScriptedProvider(script)
    raise ValueError(f"unknown mock mode {mode!r}")


# ----------------------------------------------------------------------
# Gateway

class LlmGateway:
    """complete() with cache lookup, bounded retries and rate limiting.

    Safe for concurrent use: the store serializes writes and the limiter
    covers all worker threads.
    """

    def __init__(self, provider, store: ExchangeStore, config: ProviderConfig,
                 *, clock=time.monotonic, sleep=time.sleep):
        self.provider = provider
        self.store = store
        self.config = config
        self.clock = clock
        self.sleep = sleep
        self.limiter = RateLimiter(config.requests_per_minute, clock, sleep) \
            if config.requests_per_minute else None
        self.calls_made = 0
        self._count_lock = threading.Lock()

    def complete(self, prompt: RenderedPrompt, run_index: int, doc_id: str) -> LlmExchange:
        if run_index < 0:
            raise ValueError("run_index must be >= 0")
        model_id = self.provider.model_id
        cached = self.store.get(prompt.fingerprint, run_index, model_id)
        if cached is not None:
            return cached
        meta = RequestMeta(doc_id=doc_id, run_index=run_index,
                           fingerprint=prompt.fingerprint)
        attempt = 0
        while True:
            if self.limiter is not None:
                self.limiter.acquire()
            started = self.clock()
            with self._count_lock:
                self.calls_made += 1
            try:
                text = self.provider.send(prompt.text, meta)
            except TransientProviderFailure as exc:
                attempt += 1
                if attempt > self.config.max_retries:
                    raise ProviderUnavailable(
                        f"gave up on {doc_id!r} after {attempt} attempts: {exc}") from exc
                delay = min(self.config.retry_backoff * (2 ** (attempt - 1)), 30.0)
                log.debug("transient failure for %s (attempt %d): %s", doc_id, attempt, exc)
                self.sleep(delay)
                continue
            exchange = LlmExchange(
                prompt_fingerprint=prompt.fingerprint,
                run_index=run_index,
                raw_response=text,
                model_id=model_id,
                latency=self.clock() - started,
                created_at=datetime.now(timezone.utc).isoformat(),
            )
            return self.store.put(exchange)
