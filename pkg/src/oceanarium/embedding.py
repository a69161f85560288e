"""Sentence embedding providers: a deterministic local hasher and an HTTP client.

Every provider returns unit-normalized float32 vectors of a fixed dimension.
The HTTP provider speaks the common embeddings endpoint shape:
``POST {"input": [text, ...]}`` returning ``{"data": [{"embedding": [...]}]}``.
"""

from __future__ import annotations

import hashlib
import time
from typing import Protocol, Sequence

import httpx
import numpy as np

DEFAULT_DIMENSION = 384


class EmbeddingError(Exception):
    """Base class for embedding failures."""


class EmbeddingTransportError(EmbeddingError):
    """Provider unreachable or responding badly; retriable by callers."""


class EmbeddingDimensionError(EmbeddingError):
    """Provider returned vectors of the wrong dimension; fatal configuration error."""


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...


def _unit_f32(vector: np.ndarray) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float32)
    norm = np.linalg.norm(v)
    if norm == 0.0 or not np.isfinite(norm):
        raise EmbeddingError("cannot normalize zero or non-finite vector")
    v = v / np.float32(norm)
    # one more pass pins the float32 norm to 1.0 within 1e-6
    return v / np.float32(np.linalg.norm(v))


class HashedNgramEmbedder:
    """Offline embedding provider built on seeded character-n-gram hashing.

    Each n-gram of the lowercased, space-padded text is hashed (keyed by the
    seed) onto one of ``dimension`` signed buckets; the accumulated vector is
    unit-normalized. Deterministic across processes and platforms, and texts
    sharing n-grams land closer than unrelated ones, which is all the offline
    pipeline tests need.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = 0, ngram: int = 3):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        if ngram < 1:
            raise ValueError("ngram must be >= 1")
        self.dimension = dimension
        self.seed = seed
        self.ngram = ngram
        self._key = str(seed).encode("utf-8")

    def _buckets(self, gram: str) -> tuple[int, float]:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
        index = int.from_bytes(digest[:4], "little") % self.dimension
        sign = 1.0 if digest[4] & 1 else -1.0
        return index, sign

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("text must be non-empty")
        padded = f" {' '.join(text.lower().split())} "
        acc = np.zeros(self.dimension, dtype=np.float64)
        if len(padded) <= self.ngram:
            grams = [padded]
        else:
            grams = [padded[i : i + self.ngram] for i in range(len(padded) - self.ngram + 1)]
        for gram in grams:
            index, sign = self._buckets(gram)
            acc[index] += sign
        if not acc.any():
            # pathological cancellation; fall back to a single whole-text bucket
            index, sign = self._buckets(padded)
            acc[index] = sign
        return _unit_f32(acc)

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.embed(t) for t in texts])


class HttpEmbeddingProvider:
    """Client for an embeddings endpoint at ``{base_url}/embeddings``."""

    def __init__(
        self,
        base_url: str,
        dimension: int = DEFAULT_DIMENSION,
        client: httpx.Client | None = None,
        max_retries: int = 2,
        backoff_s: float = 0.2,
        timeout_s: float = 30.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.dimension = dimension
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._client = client or httpx.Client(timeout=timeout_s)

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension), dtype=np.float32)
        if any(not t for t in texts):
            raise ValueError("texts must be non-empty")
        payload = {"input": list(texts)}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self._client.post(f"{self.base_url}/embeddings", json=payload)
                if response.status_code >= 500:
                    raise EmbeddingTransportError(f"server error {response.status_code}")
                response.raise_for_status()
                return self._parse(response.json(), len(texts))
            except (httpx.TransportError, EmbeddingTransportError) as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (2**attempt))
        raise EmbeddingTransportError(
            f"embedding provider unreachable after {self.max_retries + 1} attempts: {last_error}"
        )

    def _parse(self, body: dict, expected: int) -> np.ndarray:
        try:
            rows = [item["embedding"] for item in body["data"]]
        except (KeyError, TypeError) as exc:
            raise EmbeddingError(f"malformed embeddings response: {exc}") from exc
        if len(rows) != expected:
            raise EmbeddingError(f"expected {expected} embeddings, got {len(rows)}")
        matrix = np.asarray(rows, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != self.dimension:
            raise EmbeddingDimensionError(
                f"provider returned dimension {matrix.shape[-1]}, configured {self.dimension}"
            )
        return np.stack([_unit_f32(row) for row in matrix])
