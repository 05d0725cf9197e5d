"""Text embeddings behind a provider contract, field matching and relevance.

Two providers share the same contract: a remote HTTP embedding endpoint for
live runs, and a deterministic local token-hash bag-of-words for tests and
offline work.  Field embeddings are precomputed as datasets are added to the
catalog; sub-queries are matched to fields by cosine similarity and the
relevance of a fact description is the clamped mean of its similarity to the
statement and to the query.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx
import numpy as np

from .datastore import Dataset, DatasetStore, FieldDescriptor
from .errors import EmbeddingError
from .sqlsubset import cell_text

EMPTY_TEXT = "EMPTY_TEXT"
PROVIDER_UNAVAILABLE = "PROVIDER_UNAVAILABLE"
EMPTY_CATALOG = "EMPTY_CATALOG"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class FieldMatch:
    field: FieldDescriptor
    similarity: float


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    va, vb = a.as_array(), b.as_array()
    denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
    if denom == 0.0:
        raise EmbeddingError("cannot take cosine of a zero vector", code=EMPTY_TEXT)
    return float(va @ vb / denom)


class HashEmbeddingProvider:
    """Deterministic bag-of-words embedding: each token hashes into one bucket."""

    def __init__(self, dim: int = 256, seed: int = 1337):
        self.dim = dim
        self.seed = seed
        self.provider_id = f"hash-bow-{dim}-{seed}"

    def token_bucket(self, token: str) -> int:
        digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def embed(self, text: str) -> EmbeddingVector:
        tokens = _TOKEN_RE.findall(text.lower())
        if not tokens:
            raise EmbeddingError("cannot embed empty text", code=EMPTY_TEXT)
        counts = np.zeros(self.dim, dtype=float)
        for token in tokens:
            counts[self.token_bucket(token)] += 1.0
        return EmbeddingVector(values=tuple(counts.tolist()), dim=self.dim)


class RemoteEmbeddingProvider:
    """HTTP JSON embedding endpoint with bounded retries and a disk cache."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str = "",
        dim: int = 384,
        timeout: float = 30.0,
        retries: int = 2,
        max_concurrent: int = 4,
        cache_dir: str | Path | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.timeout = timeout
        self.retries = retries
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.provider_id = f"remote-{model}"
        self._in_flight = threading.Semaphore(max_concurrent)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def _cache_path(self, text: str) -> Path | None:
        if self.cache_dir is None:
            return None
        digest = hashlib.sha256(f"{self.model}:{text}".encode("utf-8")).hexdigest()
        return self.cache_dir / f"{digest}.json"

    def embed(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise EmbeddingError("cannot embed empty text", code=EMPTY_TEXT)
        cache_path = self._cache_path(text)
        if cache_path is not None and cache_path.is_file():
            values = json.loads(cache_path.read_text(encoding="utf-8"))
            return EmbeddingVector(values=tuple(values), dim=len(values))
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                with self._in_flight:  # bound concurrent remote calls
                    response = self._client.post(
                        f"{self.base_url}/embeddings",
                        json={"model": self.model, "input": [text]},
                    )
                response.raise_for_status()
                values = response.json()["data"][0]["embedding"]
                if cache_path is not None:
                    cache_path.parent.mkdir(parents=True, exist_ok=True)
                    cache_path.write_text(json.dumps(values), encoding="utf-8")
                return EmbeddingVector(values=tuple(float(v) for v in values), dim=len(values))
            except (httpx.HTTPError, KeyError, ValueError, json.JSONDecodeError) as exc:
                last_error = exc
                if attempt < self.retries:
                    time.sleep(min(0.25 * (attempt + 1), 1.0))
        raise EmbeddingError(
            f"embedding provider failed after {self.retries + 1} attempts: {last_error}",
            code=PROVIDER_UNAVAILABLE,
        )


class CachingProvider:
    """Read-through in-memory cache keyed by (provider, text); thread-safe."""

    def __init__(self, inner):
        self.inner = inner
        self.provider_id = inner.provider_id
        self._cache: dict[tuple[str, str], EmbeddingVector] = {}
        self._lock = threading.Lock()

    def embed(self, text: str) -> EmbeddingVector:
        key = (self.provider_id, text)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        vector = self.inner.embed(text)
        with self._lock:
            self._cache[key] = vector
        return vector


def field_embedding_text(dataset: Dataset, descriptor: FieldDescriptor) -> str:
    """The embedded string for a field: dataset name, field name, sample values."""
    samples = ", ".join(cell_text(v) for v in descriptor.sample_values)
    return f"{dataset.name}: {descriptor.name} ({samples})" if samples else (
        f"{dataset.name}: {descriptor.name}"
    )


class FieldCatalog:
    """Field embeddings, precomputed as datasets are registered."""

    def __init__(self, provider):
        self.provider = provider
        self._entries: list[tuple[FieldDescriptor, EmbeddingVector]] = []
        self._seen: set[tuple[str, str]] = set()

    def add_dataset(self, dataset: Dataset) -> None:
        for descriptor in dataset.fields:
            key = (descriptor.dataset_id, descriptor.name)
            if key in self._seen:
                continue
            self._seen.add(key)
            vector = self.provider.embed(field_embedding_text(dataset, descriptor))
            self._entries.append((descriptor, vector))

    def sync_store(self, store: DatasetStore) -> None:
        for dataset in store.datasets():
            self.add_dataset(dataset)

    def __len__(self) -> int:
        return len(self._entries)

    def top_k_fields(self, query: str, k: int = 3) -> list[FieldMatch]:
        if not self._entries:
            raise EmbeddingError("no fields in the catalog", code=EMPTY_CATALOG)
        query_vector = self.provider.embed(query)
        matches = [
            FieldMatch(field=descriptor, similarity=cosine(query_vector, vector))
            for descriptor, vector in self._entries
        ]
        matches.sort(key=lambda m: (-m.similarity, m.field.dataset_id, m.field.name))
        return matches[:k]


def clamped_cosine(provider, text_a: str, text_b: str) -> float:
    value = cosine(provider.embed(text_a), provider.embed(text_b))
    return min(1.0, max(0.0, value))


def relevance(provider, description: str, statement: str, query: str) -> float:
    """Mean of the clamped cosine similarities to the statement and the query."""
    for name, text in (("description", description), ("statement", statement), ("query", query)):
        if not text.strip():
            raise EmbeddingError(f"{name} must be nonempty", code=EMPTY_TEXT)
    to_statement = clamped_cosine(provider, description, statement)
    to_query = clamped_cosine(provider, description, query)
    return (to_statement + to_query) / 2.0
