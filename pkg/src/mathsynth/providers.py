"""Model providers: chat and embedding clients with caching, retry, and a mock transport.

Every provider call goes through a Transport (`request(path, payload, salt)`).
HttpTransport talks to an OpenAI-compatible endpoint; MockTransport fabricates
deterministic responses offline. Responses are cached on disk keyed by the
full request payload plus a cache salt, so reruns replay identical content
without touching the transport.

The salt exists so a retry of a rejected generation can carry the same wire
payload but a distinct cache identity; HTTP transports ignore it.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence, TypeVar

import numpy as np

from . import jsonl
from .pairing import EmbeddingVector

T = TypeVar("T")
R = TypeVar("R")

RETRYABLE_STATUSES = frozenset({408, 429}) | frozenset(range(500, 600))


class ProviderError(RuntimeError):
    """A provider call failed for good after any retries."""


class TransportError(RuntimeError):
    """A single transport attempt failed; may be retryable."""

    def __init__(self, message: str, *, retryable: bool, status: int | None = None):
        super().__init__(message)
        self.retryable = retryable
        self.status = status


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str = "http://localhost:8000/v1"
    api_key_env: str = "MATHSYNTH_API_KEY"
    timeout: float = 120.0
    max_retries: int = 3
    backoff_base: float = 0.5
    embed_batch_size: int = 64
    max_in_flight: int = 8

    def __post_init__(self) -> None:
        if self.max_retries < 1:
            raise ValueError("max_retries must be at least 1")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        if self.embed_batch_size < 1:
            raise ValueError("embed_batch_size must be at least 1")


def canonical_json(payload: dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def cache_key(path: str, payload: dict[str, Any], salt: str) -> str:
    blob = f"{path}\n{salt}\n{canonical_json(payload)}"
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatRequest:
    """One chat completion request; hashable and convertible to the wire payload."""

    model: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.7
    max_tokens: int = 4096
    top_p: float | None = None
    top_k: int | None = None
    min_p: float | None = None
    cache_salt: str = ""

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("chat request needs at least one message")
        for role, content in self.messages:
            if role not in ("system", "user", "assistant"):
                raise ValueError(f"unknown message role {role!r}")
            if not content:
                raise ValueError("empty message content")

    @classmethod
    def user(cls, model: str, prompt: str, **kwargs: Any) -> "ChatRequest":
        return cls(model=model, messages=(("user", prompt),), **kwargs)

    def payload(self) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        if self.top_p is not None:
            body["top_p"] = self.top_p
        if self.top_k is not None:
            body["top_k"] = self.top_k
        if self.min_p is not None:
            body["min_p"] = self.min_p
        return body

    def key(self) -> str:
        return cache_key("/chat/completions", self.payload(), self.cache_salt)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    cached: bool
    attempts: int
    key: str


class ResponseCache:
    """Disk cache of raw response bodies, one JSON file per request key.

    Writes are atomic and an index line records each new entry; safe for
    concurrent use from worker threads in one process.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()
        self._memo: dict[str, dict[str, Any]] = {}

    def _entry_path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict[str, Any] | None:
        with self._lock:
            if key in self._memo:
                return self._memo[key]
        path = self._entry_path(key)
        if not path.exists():
            return None
        body = json.loads(path.read_text(encoding="utf-8"))["response"]
        with self._lock:
            self._memo[key] = body
        return body

    def put(self, key: str, endpoint: str, salt: str, response: dict[str, Any]) -> None:
        path = self._entry_path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        record = {"key": key, "endpoint": endpoint, "salt": salt, "response": response}
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(record, ensure_ascii=False, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)
        with self._lock:
            self._memo[key] = response
            jsonl.append_records(
                self.root / "index.jsonl", [{"key": key, "endpoint": endpoint, "salt": salt}]
            )


class HttpTransport:
    """OpenAI-compatible HTTP transport. The cache salt is not sent on the wire."""

    def __init__(self, cfg: ProviderConfig):
        self.cfg = cfg

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def request(self, path: str, payload: dict[str, Any], salt: str = "") -> dict[str, Any]:
        import requests

        url = self.cfg.base_url.rstrip("/") + path
        try:
            resp = requests.post(
                url, json=payload, headers=self._headers(), timeout=self.cfg.timeout
            )
        except requests.exceptions.RequestException as exc:
            raise TransportError(f"request to {url} failed: {exc}", retryable=True) from exc
        if resp.status_code != 200:
            retryable = resp.status_code in RETRYABLE_STATUSES
            raise TransportError(
                f"{url} returned {resp.status_code}: {resp.text[:200]}",
                retryable=retryable,
                status=resp.status_code,
            )
        try:
            return resp.json()
        except ValueError as exc:
            raise TransportError(f"{url} returned non-JSON body", retryable=True) from exc


def mock_embedding(text: str, dim: int = 64, seed: int = 0) -> list[float]:
    """Deterministic unit vector for a text; texts sharing a 24-char prefix are near-parallel.

    The vector is dominated by a direction keyed on the prefix with a small
    full-text perturbation, so reworded variants of one topic land above any
    realistic pairing threshold while unrelated texts stay near orthogonal.
    """

    def unit(tag: str) -> np.ndarray:
        digest = hashlib.sha256(f"{seed}:{tag}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        v = rng.standard_normal(dim)
        return v / np.linalg.norm(v)

    vec = 0.97 * unit("prefix:" + text[:24]) + 0.03 * unit("full:" + text)
    vec = vec / np.linalg.norm(vec)
    return [float(x) for x in vec]


class MockTransport:
    """Offline transport producing deterministic, well-formed responses.

    Content is a pure function of (payload, salt, seed): the prompt text is
    sniffed to decide whether a question, verdict, solution, difficulty score
    or embedding batch is expected, and all variable numbers are derived from
    a hash of the request. Instrumentation counters support concurrency and
    cache tests.

    `script` maps a substring of the prompt to a canned reply: a string, an
    exception to raise, a callable `(payload, salt) -> str`, or a list of
    those consumed one per call (last entry repeats). First match wins.
    """

    def __init__(
        self,
        seed: int = 0,
        dim: int = 64,
        latency: float = 0.0,
        script: dict[str, Any] | None = None,
    ):
        self.seed = seed
        self.dim = dim
        self.latency = latency
        self.script = dict(script or {})
        self.calls = 0
        self.max_concurrent = 0
        self._active = 0
        self._lock = threading.Lock()

    def request(self, path: str, payload: dict[str, Any], salt: str = "") -> dict[str, Any]:
        with self._lock:
            self.calls += 1
            self._active += 1
            self.max_concurrent = max(self.max_concurrent, self._active)
        try:
            if self.latency:
                time.sleep(self.latency)
            if path == "/embeddings":
                return self._embeddings(payload)
            if path == "/chat/completions":
                return self._chat(payload, salt)
            raise TransportError(f"mock has no endpoint {path}", retryable=False, status=404)
        finally:
            with self._lock:
                self._active -= 1

    # -- response fabrication ------------------------------------------------

    def _entropy(self, payload: dict[str, Any], salt: str) -> str:
        blob = f"{self.seed}\n{salt}\n{canonical_json(payload)}"
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def _embeddings(self, payload: dict[str, Any]) -> dict[str, Any]:
        texts = payload.get("input", [])
        data = [
            {
                "object": "embedding",
                "index": i,
                "embedding": mock_embedding(text, dim=self.dim, seed=self.seed),
            }
            for i, text in enumerate(texts)
        ]
        return {"object": "list", "model": payload.get("model", "mock-embed"), "data": data}

    def _chat(self, payload: dict[str, Any], salt: str) -> dict[str, Any]:
        text = "\n".join(m.get("content", "") for m in payload.get("messages", []))
        scripted = self._scripted(text, payload, salt)
        if scripted is not None:
            content = scripted
        else:
            content = self._fabricate(text, self._entropy(payload, salt))
        return {
            "id": "mock-" + self._entropy(payload, salt)[:12],
            "object": "chat.completion",
            "model": payload.get("model", "mock-chat"),
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop",
                }
            ],
        }

    def _scripted(self, text: str, payload: dict[str, Any], salt: str) -> str | None:
        for marker, reply in self.script.items():
            if marker not in text:
                continue
            if isinstance(reply, list):
                with self._lock:
                    reply = reply.pop(0) if len(reply) > 1 else reply[0]
            if isinstance(reply, Exception):
                raise reply
            if callable(reply):
                return reply(payload, salt)
            return reply
        return None

    def _fabricate(self, prompt: str, entropy: str) -> str:
        nums = [2 + int(entropy[i : i + 2], 16) % 97 for i in range(0, 12, 2)]
        if "#Scenario Integration#" in prompt:
            return (
                "#Core Elements#:\n"
                "- counts, rates, and a shared total are preserved from both settings\n\n"
                "#Scenario Integration#:\n"
                "- one setting supplies the objects, the other supplies the schedule\n\n"
                "#New Problem#:\n"
                f"A depot receives {nums[0]} crates every morning and {nums[1]} crates "
                f"every evening for {nums[2]} consecutive days. Each crate holds "
                f"{nums[3]} parts, and inspectors discard {nums[4]} damaged parts in "
                "total. How many usable parts remain at the end of the last day?"
            )
        if "#Simplification Strategy#" in prompt:
            return (
                "#Core Elements#:\n"
                "- a count of crates and a per-crate content drive the total\n\n"
                "#Simplification Strategy#:\n"
                "- keep a single delivery and drop the staged schedule\n\n"
                "#New Problem#:\n"
                f"A depot receives {nums[0]} crates, and each crate holds {nums[3]} "
                f"parts. After inspectors discard {nums[4]} damaged parts, how many "
                "parts remain?"
            )
        if "logical flow" in prompt.lower():
            return (
                "Clarity: PASS\n"
                "Completeness: PASS\n"
                "Formatting: PASS\n"
                "Relevance: PASS\n"
                "Solvability: PASS\n"
                "Logical Flow: PASS\n"
                "Overall: PASS"
            )
        if "/10" in prompt:
            score = 1 + int(entropy[12:16], 16) % 10
            return f"Difficulty: {score}/10"
        total = nums[0] * nums[3] + nums[1]
        kept = max(total - nums[4], 1)
        return (
            "First count the deliveries, then apply the per-crate contents, and "
            f"finally remove the discarded parts. The running total reaches {total} "
            f"before inspection and {kept} afterwards. The final count is "
            f"\\boxed{{{kept}}}."
        )


class ChatClient:
    """Cached, retrying chat completion client over any transport."""

    def __init__(
        self,
        transport: Any,
        cfg: ProviderConfig | None = None,
        cache: ResponseCache | None = None,
    ):
        self.transport = transport
        self.cfg = cfg or ProviderConfig()
        self.cache = cache
        self.stats = ProviderStats()

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = request.key()
        self.stats.bump("requests")
        if self.cache is not None:
            body = self.cache.get(key)
            if body is not None:
                self.stats.bump("cache_hits")
                return ChatResponse(
                    content=_extract_content(body, key), cached=True, attempts=0, key=key
                )
        payload = request.payload()
        last_error: Exception | None = None
        for attempt in range(1, self.cfg.max_retries + 1):
            self.stats.bump("transport_calls")
            try:
                body = self.transport.request("/chat/completions", payload, request.cache_salt)
                content = _extract_content(body, key)
            except TransportError as exc:
                last_error = exc
                if not exc.retryable or attempt == self.cfg.max_retries:
                    break
                self.stats.bump("retries")
                time.sleep(self.cfg.backoff_base * (2 ** (attempt - 1)))
                continue
            if self.cache is not None:
                self.cache.put(key, "/chat/completions", request.cache_salt, body)
            return ChatResponse(content=content, cached=False, attempts=attempt, key=key)
        raise ProviderError(
            f"chat completion failed after {self.cfg.max_retries} attempts: {last_error}"
        ) from last_error


def _extract_content(body: dict[str, Any], key: str) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(
            f"malformed chat response for {key[:12]}: {exc!r}", retryable=True
        ) from exc
    if not isinstance(content, str) or not content.strip():
        raise TransportError(f"empty chat content for {key[:12]}", retryable=True)
    return content


class EmbeddingClient:
    """Batched embedding client; caches one response record per input text."""

    def __init__(
        self,
        transport: Any,
        model_tag: str,
        cfg: ProviderConfig | None = None,
        cache: ResponseCache | None = None,
    ):
        self.transport = transport
        self.model_tag = model_tag
        self.cfg = cfg or ProviderConfig()
        self.cache = cache
        self.stats = ProviderStats()

    def _text_key(self, text: str) -> str:
        return cache_key("/embeddings", {"model": self.model_tag, "input": [text]}, "")

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ProviderError("embed() called with an empty text list")
        out: list[EmbeddingVector | None] = [None] * len(texts)
        pending: list[int] = []
        for i, text in enumerate(texts):
            self.stats.bump("requests")
            if self.cache is not None:
                body = self.cache.get(self._text_key(text))
                if body is not None:
                    self.stats.bump("cache_hits")
                    out[i] = EmbeddingVector.from_values(body["data"][0]["embedding"])
                    continue
            pending.append(i)
        for start in range(0, len(pending), self.cfg.embed_batch_size):
            batch = pending[start : start + self.cfg.embed_batch_size]
            vectors = self._embed_batch([texts[i] for i in batch])
            for i, vector in zip(batch, vectors):
                out[i] = vector
                if self.cache is not None:
                    self.cache.put(
                        self._text_key(texts[i]),
                        "/embeddings",
                        "",
                        {"data": [{"index": 0, "embedding": vector.values.tolist()}]},
                    )
        return [v for v in out if v is not None]

    def _embed_batch(self, batch: list[str]) -> list[EmbeddingVector]:
        payload = {"model": self.model_tag, "input": batch}
        last_error: Exception | None = None
        for attempt in range(1, self.cfg.max_retries + 1):
            self.stats.bump("transport_calls")
            try:
                body = self.transport.request("/embeddings", payload, "")
                data = sorted(body["data"], key=lambda d: d["index"])
                if len(data) != len(batch):
                    raise TransportError(
                        f"embedding count mismatch: sent {len(batch)}, got {len(data)}",
                        retryable=True,
                    )
                return [EmbeddingVector.from_values(d["embedding"]) for d in data]
            except TransportError as exc:
                last_error = exc
                if not exc.retryable or attempt == self.cfg.max_retries:
                    break
                self.stats.bump("retries")
                time.sleep(self.cfg.backoff_base * (2 ** (attempt - 1)))
            except (KeyError, TypeError) as exc:
                raise ProviderError(f"malformed embedding response: {exc!r}") from exc
        raise ProviderError(f"embedding request failed: {last_error}") from last_error


class ProviderStats:
    """Thread-safe call counters shared by the clients."""

    FIELDS = ("requests", "cache_hits", "transport_calls", "retries")

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts = {name: 0 for name in self.FIELDS}

    def bump(self, name: str, by: int = 1) -> None:
        with self._lock:
            self._counts[name] += by

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)


def map_bounded(
    fn: Callable[[T], R], items: Iterable[T], max_in_flight: int
) -> list[R]:
    """Apply fn to every item with at most max_in_flight concurrent calls.

    Results come back in input order; the first exception propagates after
    in-flight work drains.
    """
    items = list(items)
    if not items:
        return []
    if max_in_flight == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(fn, items))
