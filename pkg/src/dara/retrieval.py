"""Ranking schema items against a task description."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import urllib.error
import urllib.request
from collections import Counter, OrderedDict
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import EmptyCandidates, ProviderError

logger = logging.getLogger(__name__)

DEFAULT_K = 5
_WORD = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class ScoredCandidate:
    name: str
    score: float
    source: str  # "embedding" | "lexical"


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def tokens(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def candidate_text(name: str) -> str:
    """Schema name as plain words: ``a.b_c`` becomes ``a b c``."""
    return re.sub(r"[._]+", " ", name).strip()


def lexical_score(query: str, name: str) -> float:
    """Token-overlap F1 between the query and a schema name."""
    q, c = Counter(tokens(query)), Counter(tokens(candidate_text(name)))
    overlap = sum((q & c).values())
    if overlap == 0:
        return 0.0
    return 2 * overlap / (sum(q.values()) + sum(c.values()))


class HashingProvider:
    """Deterministic offline embeddings from hashed word and character-trigram features."""

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def _bucket(self, feature: str) -> tuple[int, float]:
        h = int.from_bytes(hashlib.blake2b(feature.encode(), digest_size=8).digest(), "little")
        return h % self.dimension, 1.0 if (h >> 63) & 1 else -1.0

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            v = np.zeros(self.dimension)
            for w in tokens(text):
                feats = [w] + [w[i:i + 3] for i in range(max(1, len(w) - 2))]
                for f in feats:
                    idx, sign = self._bucket(f)
                    v[idx] += sign
            out.append(v)
        return out


class RemoteProvider:
    """Embeddings from an HTTP endpoint: POST ``{"texts": [...]}``, reply ``{"vectors": [...]}``."""

    def __init__(self, url: str, dimension: int | None = None, timeout: float = 30.0, max_in_flight: int = 4):
        self.url = url
        self.dimension = dimension or 0
        self.timeout = timeout
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        body = json.dumps({"texts": list(texts)}).encode()
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        with self._slots:
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    doc = json.loads(resp.read().decode())
            except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
                raise ProviderError(f"embedding endpoint {self.url}: {exc}") from exc
        vectors = doc.get("vectors") if isinstance(doc, dict) else None
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError("embedding endpoint returned a malformed response")
        arrays = [np.asarray(v, dtype=float) for v in vectors]
        dims = {a.shape for a in arrays}
        if len(dims) > 1 or (self.dimension and dims != {(self.dimension,)}):
            raise ProviderError(f"inconsistent vector dimensions {sorted(dims)}")
        if arrays and not self.dimension:
            self.dimension = arrays[0].shape[0]
        return arrays


class CachedProvider:
    """Bounded LRU cache keyed by exact text in front of another provider."""

    def __init__(self, inner: EmbeddingProvider, maxsize: int = 10_000):
        self.inner = inner
        self.maxsize = maxsize
        self._cache: OrderedDict[str, np.ndarray] = OrderedDict()
        self._lock = threading.Lock()

    @property
    def dimension(self) -> int:
        return self.inner.dimension

    def __len__(self) -> int:
        return len(self._cache)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        with self._lock:
            missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        fresh = dict(zip(missing, self.inner.embed(missing))) if missing else {}
        out = []
        with self._lock:
            for t, v in fresh.items():
                self._cache[t] = v
            for t in texts:
                v = self._cache.get(t)
                if v is None:
                    v = fresh[t]
                else:
                    self._cache.move_to_end(t)
                out.append(v)
            while len(self._cache) > self.maxsize:
                self._cache.popitem(last=False)
        return out


def _cosine(q: np.ndarray, m: np.ndarray) -> np.ndarray:
    qn = np.linalg.norm(q)
    mn = np.linalg.norm(m, axis=1)
    denom = qn * mn
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = np.where(denom > 0, m @ q / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(sims, -1.0, 1.0)


def rank(query: str, candidates: Sequence[str], provider: EmbeddingProvider | str | None = "lexical") -> list[ScoredCandidate]:
    """Score every candidate and sort by descending score, then name."""
    if not candidates:
        raise EmptyCandidates("no candidates to rank")
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    names = list(dict.fromkeys(candidates))
    if provider is None or provider == "lexical":
        scored = [ScoredCandidate(n, lexical_score(query, n), "lexical") for n in names]
    else:
        vecs = provider.embed([query] + [candidate_text(n) for n in names])
        if not all(np.all(np.isfinite(v)) for v in vecs):
            raise ProviderError("provider returned non-finite vectors")
        sims = _cosine(vecs[0], np.vstack(vecs[1:]))
        scored = [ScoredCandidate(n, float(s), "embedding") for n, s in zip(names, sims)]
    return sorted(scored, key=lambda c: (-c.score, c.name))


def topk(query: str, candidates: Sequence[str], k: int = DEFAULT_K,
         provider: EmbeddingProvider | str | None = "lexical") -> list[str]:
    if k < 1:
        raise ValueError("k must be at least 1")
    return [c.name for c in rank(query, candidates, provider)[:k]]


def make_provider(mode: str = "lexical", endpoint: str | None = None, cache_size: int = 10_000):
    """Provider for the ``retriever.mode`` / ``retriever.endpoint`` settings."""
    if mode == "lexical":
        return "lexical"
    if mode == "hashing":
        return CachedProvider(HashingProvider(), cache_size)
    if mode == "embedding":
        if not endpoint:
            raise ProviderError("retriever.mode=embedding needs retriever.endpoint")
        return CachedProvider(RemoteProvider(endpoint), cache_size)
    raise ValueError(f"unknown retriever mode {mode!r}")
