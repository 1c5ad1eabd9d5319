"""Sentence-embedding providers behind the semantic similarity metric.

Two providers ship: a deterministic hashed character-trigram fallback that
needs no network or model files, and an HTTP client for the embedding service.
Scores are cosine similarities clamped into [0, 1].
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
import requests

EMBED_ENDPOINT_VAR = "EMBED_ENDPOINT"


class ProviderUnavailable(RuntimeError):
    pass


class MalformedServiceReply(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class NonDeterministicProvider(RuntimeError):
    pass


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    dim: int
    provider_id: str

    def __post_init__(self) -> None:
        if len(self.values) != self.dim:
            raise DimensionMismatch(f"vector length {len(self.values)} != dim {self.dim}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding vector contains non-finite values")


class EmbeddingProvider(ABC):
    """Maps texts to fixed-dimension vectors; must be deterministic."""

    id: str
    dim: int

    @abstractmethod
    def embed(self, texts: list[str]) -> list[EmbeddingVector]: ...


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Raw cosine of two vectors; zero vectors yield 0, identical ones exactly 1."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dims differ: {a.dim} vs {b.dim}")
    norm_a = float(np.linalg.norm(a.values))
    norm_b = float(np.linalg.norm(b.values))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    if np.array_equal(a.values, b.values):
        return 1.0
    return float(np.dot(a.values, b.values) / (norm_a * norm_b))


def embed_semantic_similarity(candidate: str, reference: str, provider: EmbeddingProvider) -> float:
    """Cosine of the two texts' embeddings, clamped into [0, 1].

    Empty text is embedded as-is; whatever the provider returns for it still
    goes through the clamp.
    """
    vec_c, vec_r = provider.embed([candidate, reference])
    raw = cosine_similarity(vec_c, vec_r)
    return min(1.0, max(0.0, raw))


def _trigram_features(text: str) -> list[str]:
    if len(text) < 3:
        return [text] if text else []
    return [text[i : i + 3] for i in range(len(text) - 2)]


def _stable_bucket(feature: str, dim: int) -> int:
    digest = hashlib.sha256(feature.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dim


def fallback_embed(text: str, dim: int = 256) -> EmbeddingVector:
    """L2-normalized hashed character-trigram counts.

    Purely computational, so identical across processes and machines; empty
    text maps to the zero vector.
    """
    if dim < 8:
        raise ValueError(f"dim must be >= 8, got {dim}")
    counts = np.zeros(dim, dtype=np.float64)
    for feature in _trigram_features(text):
        counts[_stable_bucket(feature, dim)] += 1.0
    norm = np.linalg.norm(counts)
    if norm > 0.0:
        counts /= norm
    return EmbeddingVector(counts, dim, provider_id=f"hash-trigram-{dim}")


class FallbackProvider(EmbeddingProvider):
    """Built-in provider wrapping :func:`fallback_embed`."""

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.id = f"hash-trigram-{dim}"

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        return [fallback_embed(t, self.dim) for t in texts]


def parse_embed_reply(payload: object, expected_count: int, provider_id: str) -> list[EmbeddingVector]:
    """Validate a service reply against the consumer contract.

    The reply must be ``{"dim": int, "vectors": [[float...]...], "model": str}``
    with exactly one vector of the stated dimension per requested text.
    """
    if not isinstance(payload, dict):
        raise MalformedServiceReply(f"reply is not a JSON object: {type(payload).__name__}")
    for key in ("dim", "vectors", "model"):
        if key not in payload:
            raise MalformedServiceReply(f"reply missing {key!r}")
    dim = payload["dim"]
    vectors = payload["vectors"]
    if not isinstance(dim, int) or dim < 1:
        raise MalformedServiceReply(f"bad dim: {dim!r}")
    if not isinstance(vectors, list) or len(vectors) != expected_count:
        got = len(vectors) if isinstance(vectors, list) else f"type {type(vectors).__name__}"
        raise MalformedServiceReply(f"expected {expected_count} vectors, got {got}")
    out = []
    for row in vectors:
        arr = np.asarray(row, dtype=np.float64)
        if arr.ndim != 1 or len(arr) != dim:
            raise MalformedServiceReply(f"vector of length {arr.shape} != dim {dim}")
        out.append(EmbeddingVector(arr, dim, provider_id))
    return out


class RemoteProvider(EmbeddingProvider):
    """Client for the embedding service: POST ``{endpoint}/embed``.

    Requests are idempotent, so transient failures (connection errors and 5xx)
    are retried with backoff up to ``retries`` attempts before raising
    :class:`ProviderUnavailable`. Malformed replies are not retried.
    """

    def __init__(
        self,
        endpoint: str,
        *,
        max_batch: int = 64,
        retries: int = 3,
        backoff: float = 0.5,
        session: requests.Session | None = None,
        timeout: float = 30.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.id = f"remote:{self.endpoint}"
        self.dim = 0  # set from the first reply
        self.max_batch = max_batch
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._session = session or requests.Session()

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        out: list[EmbeddingVector] = []
        for start in range(0, len(texts), self.max_batch):
            out.extend(self._embed_batch(texts[start : start + self.max_batch]))
        return out

    def _embed_batch(self, batch: list[str]) -> list[EmbeddingVector]:
        payload = self._post_with_retries({"texts": batch})
        vectors = parse_embed_reply(payload, expected_count=len(batch), provider_id=self.id)
        if vectors:
            if self.dim == 0:
                self.dim = vectors[0].dim
            elif vectors[0].dim != self.dim:
                raise DimensionMismatch(
                    f"service dim changed from {self.dim} to {vectors[0].dim}"
                )
        return vectors

    def _post_with_retries(self, body: dict) -> object:
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                reply = self._session.post(
                    f"{self.endpoint}/embed", json=body, timeout=self.timeout
                )
                if reply.status_code >= 500:
                    last_error = ProviderUnavailable(f"service returned {reply.status_code}")
                elif reply.status_code != 200:
                    raise MalformedServiceReply(
                        f"service returned {reply.status_code}: {reply.text[:200]}"
                    )
                else:
                    return reply.json()
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
            if attempt + 1 < self.retries:
                time.sleep(self.backoff * (2**attempt))
        raise ProviderUnavailable(
            f"embedding service unreachable after {self.retries} attempts: {last_error}"
        )


def remote_embed(texts: list[str], endpoint: str, **kwargs) -> list[EmbeddingVector]:
    """One-shot convenience wrapper around :class:`RemoteProvider`."""
    return RemoteProvider(endpoint, **kwargs).embed(texts)


@dataclass
class CachedProvider(EmbeddingProvider):
    """Per-run cache keyed by (provider id, text hash).

    Reference sections are compared against many candidates; caching makes the
    provider cost linear in distinct texts. Insert-if-absent is lock-guarded so
    concurrent scoring tasks can share one instance.
    """

    inner: EmbeddingProvider
    _cache: dict[str, EmbeddingVector] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self) -> None:
        self.id = self.inner.id
        self.dim = self.inner.dim

    @staticmethod
    def _key(provider_id: str, text: str) -> str:
        return provider_id + ":" + hashlib.sha256(text.encode("utf-8")).hexdigest()

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        keys = [self._key(self.inner.id, t) for t in texts]
        with self._lock:
            missing = [(k, t) for k, t in zip(keys, texts) if k not in self._cache]
        if missing:
            fresh = self.inner.embed([t for _, t in missing])
            with self._lock:
                for (k, _), vec in zip(missing, fresh):
                    self._cache.setdefault(k, vec)
        with self._lock:
            return [self._cache[k] for k in keys]


def check_determinism(provider: EmbeddingProvider, probe: str = "determinism probe") -> None:
    """Reject providers that return different vectors for the same text."""
    first, second = provider.embed([probe])[0], provider.embed([probe])[0]
    if not np.array_equal(first.values, second.values):
        raise NonDeterministicProvider(
            f"provider {provider.id!r} returned differing vectors for one text"
        )


def provider_from_env(env: dict | None = None) -> EmbeddingProvider:
    """Remote provider when ``EMBED_ENDPOINT`` is set, fallback otherwise."""
    env = os.environ if env is None else env
    endpoint = env.get(EMBED_ENDPOINT_VAR, "").strip()
    if endpoint:
        return RemoteProvider(endpoint)
    return FallbackProvider()
