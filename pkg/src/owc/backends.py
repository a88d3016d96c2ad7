"""Embedding and judge providers: remote JSON clients and deterministic mocks.

Embeddings are plain numpy vectors with norm 0 (empty text) or 1; dimension
is constant within a run. Remote and mock providers are interchangeable
behind ``embed_batch`` / ``complete``, so the whole pipeline runs offline.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import (
    BackendError,
    ConfigError,
    DimensionMismatchError,
    JudgeParseError,
    MalformedResponseError,
    TransportError,
)
from .prompts import (
    extract_binary_slots,
    extract_pairwise_slots,
    is_pairwise_prompt,
    render_pairwise_prompt,
)
from .textproc import normalize, tokenize

logger = logging.getLogger(__name__)

API_KEY_ENV = "OWC_API_KEY"
MOCK_EMBED_DIMS = 256
MOCK_JUDGE_RULES = ("exact", "token_overlap", "cosine")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_TRANSPORT_RETRIES = 3


@dataclass(frozen=True)
class BackendDescriptor:
    """Static configuration for one provider instance."""

    kind: str  # remote_embed | remote_judge | mock_embed | mock_judge
    endpoint: str = ""
    model_name: str = ""
    parallelism: int = 1
    timeout_s: float = 30.0
    seed: int = 42
    judge_rule: str = "token_overlap"
    judge_threshold: float = 0.5
    max_prompt_chars: int = 16_000

    def __post_init__(self) -> None:
        if self.kind.startswith("remote") and not self.endpoint:
            raise ConfigError(f"{self.kind} backend requires an endpoint")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.kind == "mock_judge" and self.judge_rule not in MOCK_JUDGE_RULES:
            raise ConfigError(f"unknown mock judge rule {self.judge_rule!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint": self.endpoint,
            "model_name": self.model_name,
            "seed": self.seed,
            "judge_rule": self.judge_rule,
            "judge_threshold": self.judge_threshold,
        }


class Embedder(Protocol):
    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class Judge(Protocol):
    def complete(self, prompt: str) -> str: ...


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity with the zero-vector convention: either side zero -> 0."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(min(1.0, max(-1.0, float(np.dot(u, v)) / (nu * nv))))


def _fnv1a64(data: bytes, seed: int) -> int:
    h = _FNV_OFFSET ^ (seed & _MASK64)
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def char_trigrams(text: str) -> list[str]:
    """Lowercased character trigrams of the sentinel-padded text."""
    padded = "^" + text.lower() + "$"
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


def mock_embed(text: str, seed: int, dims: int = MOCK_EMBED_DIMS) -> np.ndarray:
    """Hashed trigram-bag embedding: stable across platforms and releases.

    Trigram counts are binned by a seeded 64-bit FNV-1a hash and the count
    vector is L2-normalized. Empty text maps to the zero vector.
    """
    counts = np.zeros(dims, dtype=np.float64)
    for tri in char_trigrams(text):
        counts[_fnv1a64(tri.encode("utf-8"), seed) % dims] += 1.0
    norm = float(np.linalg.norm(counts))
    if norm == 0.0:
        return counts
    return counts / norm


class MockEmbedder:
    def __init__(self, seed: int = 42, dims: int = MOCK_EMBED_DIMS):
        self.seed = seed
        self.dims = dims

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("embed_batch requires a nonempty batch")
        return [mock_embed(t, self.seed, self.dims) for t in texts]


class MockJudge:
    """Rule-table judge that reads its inputs back out of the rendered prompt.

    Scoring prompts are decided by the configured rule (exact normalized
    match, token overlap, or trigram-cosine threshold); ranking prompts are
    always decided by comparing trigram cosines to the target, ties going to
    slot A.
    """

    def __init__(self, rule: str = "token_overlap", threshold: float = 0.5, seed: int = 42):
        if rule not in MOCK_JUDGE_RULES:
            raise ConfigError(f"unknown mock judge rule {rule!r}")
        self.rule = rule
        self.threshold = threshold
        self.seed = seed

    def _binary_verdict(self, answer: str, target: str) -> str:
        if self.rule == "exact":
            return "1" if normalize(answer) == normalize(target) else "0"
        if self.rule == "token_overlap":
            shared = set(tokenize(normalize(answer))) & set(tokenize(normalize(target)))
            return "1" if shared else "0"
        sim = cosine(mock_embed(answer, self.seed), mock_embed(target, self.seed))
        return "1" if sim >= self.threshold else "0"

    def complete(self, prompt: str) -> str:
        if is_pairwise_prompt(prompt):
            a, b, target = extract_pairwise_slots(prompt)
            target_vec = mock_embed(target, self.seed)
            sim_a = cosine(mock_embed(a, self.seed), target_vec)
            sim_b = cosine(mock_embed(b, self.seed), target_vec)
            return "1" if sim_a >= sim_b else "0"
        answer, target = extract_binary_slots(prompt)
        return self._binary_verdict(answer, target)


def _auth_headers() -> dict[str, str]:
    key = os.environ.get(API_KEY_ENV, "")
    headers = {"Content-Type": "application/json"}
    if key:
        headers["Authorization"] = f"Bearer {key}"
    return headers


def _post_json(url: str, payload: dict, timeout_s: float) -> dict:
    last: Exception | None = None
    for attempt in range(_TRANSPORT_RETRIES):
        try:
            resp = requests.post(url, json=payload, headers=_auth_headers(), timeout=timeout_s)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last = exc
            logger.warning("transport failure (attempt %d/%d): %s", attempt + 1, _TRANSPORT_RETRIES, exc)
            time.sleep(min(2.0, 0.2 * (attempt + 1)))
            continue
        if resp.status_code != 200:
            # HTTP-level rejection is not retriable.
            raise BackendError(f"{url} rejected request: HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponseError(f"{url} returned non-JSON body") from exc
    raise TransportError(f"{url} unreachable after {_TRANSPORT_RETRIES} attempts: {last}")


class RemoteEmbedder:
    """Client for a JSON embeddings endpoint ({model, input: [...]})."""

    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor
        self._dims: int | None = None

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("embed_batch requires a nonempty batch")
        body = _post_json(
            self.descriptor.endpoint,
            {"model": self.descriptor.model_name, "input": list(texts)},
            self.descriptor.timeout_s,
        )
        try:
            items = body["data"]
            items = sorted(items, key=lambda it: it.get("index", 0))
            raw = [np.asarray(it["embedding"], dtype=np.float64) for it in items]
        except (KeyError, TypeError) as exc:
            raise MalformedResponseError("embedding response missing data/embedding") from exc
        if len(raw) != len(texts):
            raise MalformedResponseError(
                f"embedding response has {len(raw)} vectors for {len(texts)} inputs"
            )
        out = []
        for text, vec in zip(texts, raw):
            if self._dims is None:
                self._dims = vec.shape[0]
            elif vec.shape[0] != self._dims:
                raise DimensionMismatchError(
                    f"embedding dimension changed from {self._dims} to {vec.shape[0]}",
                    text=text,
                )
            norm = float(np.linalg.norm(vec))
            out.append(vec / norm if norm > 0.0 else vec)
        return out


class RemoteJudge:
    """Client for an OpenAI-style chat-completions endpoint, temperature 0."""

    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor
        self.truncations = 0

    def complete(self, prompt: str) -> str:
        budget = self.descriptor.max_prompt_chars
        if budget > 0 and len(prompt) > budget:
            self.truncations += 1
            logger.warning("judge prompt truncated to %d chars", budget)
            prompt = prompt[:budget]
        body = _post_json(
            self.descriptor.endpoint,
            {
                "model": self.descriptor.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0,
            },
            self.descriptor.timeout_s,
        )
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError("judge response missing choices[0].message.content") from exc


class AuditLog:
    """Append-only request/response log; writes are serialized by a lock."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    @staticmethod
    def _request_key(kind: str, request: object) -> str:
        return json.dumps({"kind": kind, "request": request}, sort_keys=True, ensure_ascii=False)

    def append(self, kind: str, request: object, response: object) -> None:
        line = json.dumps(
            {"kind": kind, "request": request, "response": response},
            sort_keys=True,
            ensure_ascii=False,
        )
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()

    def load(self) -> dict[str, object]:
        replay: dict[str, object] = {}
        with self.path.open(encoding="utf-8") as fh:
            for raw in fh:
                entry = json.loads(raw)
                replay[self._request_key(entry["kind"], entry["request"])] = entry["response"]
        return replay


class AuditingEmbedder:
    def __init__(self, inner: Embedder, log: AuditLog):
        self.inner = inner
        self.log = log

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        vectors = self.inner.embed_batch(texts)
        self.log.append("embed", list(texts), [v.tolist() for v in vectors])
        return vectors


class AuditingJudge:
    def __init__(self, inner: Judge, log: AuditLog):
        self.inner = inner
        self.log = log

    def complete(self, prompt: str) -> str:
        reply = self.inner.complete(prompt)
        self.log.append("judge", prompt, reply)
        return reply


class ReplayEmbedder:
    """Serves embeddings recorded in an audit log; unseen input is an error."""

    def __init__(self, log: AuditLog):
        self._responses = log.load()

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        key = AuditLog._request_key("embed", list(texts))
        if key not in self._responses:
            raise BackendError("audit log has no recorded response for embed batch")
        return [np.asarray(v, dtype=np.float64) for v in self._responses[key]]


class ReplayJudge:
    def __init__(self, log: AuditLog):
        self._responses = log.load()

    def complete(self, prompt: str) -> str:
        key = AuditLog._request_key("judge", prompt)
        if key not in self._responses:
            raise BackendError("audit log has no recorded response for judge prompt")
        return str(self._responses[key])


def build_embedder(descriptor: BackendDescriptor) -> Embedder:
    if descriptor.kind == "mock_embed":
        return MockEmbedder(seed=descriptor.seed)
    if descriptor.kind == "remote_embed":
        return RemoteEmbedder(descriptor)
    raise ConfigError(f"not an embedder kind: {descriptor.kind}")


def build_judge(descriptor: BackendDescriptor) -> Judge:
    if descriptor.kind == "mock_judge":
        return MockJudge(
            rule=descriptor.judge_rule,
            threshold=descriptor.judge_threshold,
            seed=descriptor.seed,
        )
    if descriptor.kind == "remote_judge":
        return RemoteJudge(descriptor)
    raise ConfigError(f"not a judge kind: {descriptor.kind}")


def judge_pairwise(
    label_a: str, label_b: str, target: str, judge: Judge, retries: int = 3
) -> str:
    """Adjudicate one ranking match; returns "A" or "B".

    Parse failures are retried with fresh completions; after ``retries``
    attempts the JudgeParseError propagates (callers count and skip).
    """
    from .metrics import parse_binary_verdict

    prompt = render_pairwise_prompt(label_a, label_b, target)
    last: JudgeParseError | None = None
    for _ in range(retries):
        reply = judge.complete(prompt)
        try:
            return "A" if parse_binary_verdict(reply) == 1 else "B"
        except JudgeParseError as exc:
            last = exc
    assert last is not None
    raise last
