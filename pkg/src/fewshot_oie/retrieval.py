"""Sentence embedding backends and similarity-based demonstration selection."""

from __future__ import annotations

import hashlib
import heapq
import math
import os
import threading
from dataclasses import dataclass
from typing import Sequence

import httpx
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import AnnotatedCorpus, AnnotatedSentence, Sentence, normalize_text
from .validation import check_corpus, check_positive_int, check_sentence

# Candidates whose fast (BLAS) similarity lies within this margin of the cut-off are
# re-scored exactly; BLAS rounding error on unit vectors is orders of magnitude smaller.
_RESCORE_MARGIN = 1e-9


class EmbeddingError(RuntimeError):
    """Embedding backend failure; ``retriable`` tells callers whether to try again."""

    def __init__(self, message: str, *, retriable: bool = True, diagnostics: str = ""):
        super().__init__(message)
        self.retriable = retriable
        self.diagnostics = diagnostics


class EmptyPoolError(ValueError):
    pass


class Embedder:
    """Base class for embedding backends.

    Subclasses implement ``_embed_batch``. ``calls`` counts backend invocations
    (batches), which lets callers assert that a pipeline never touched the backend.
    """

    backend_id = "abstract"
    max_in_flight = 4

    def __init__(self):
        self.calls = 0
        self._lock = threading.Lock()

    def __deepcopy__(self, memo):
        return self

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        for t in texts:
            if not isinstance(t, str) or not t.strip():
                raise ValueError("cannot embed empty text")
        with self._lock:
            self.calls += 1
        out = np.asarray(self._embed_batch(texts), dtype=np.float64)
        if out.ndim != 2 or out.shape[0] != len(texts):
            raise EmbeddingError(f"{self.backend_id}: expected {len(texts)} vectors, got shape {out.shape}",
                                 retriable=False)
        if not np.all(np.isfinite(out)):
            raise EmbeddingError(f"{self.backend_id}: non-finite embedding values", retriable=False)
        return out

    def _embed_batch(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError


class HashingEmbedder(Embedder):
    """Deterministic hashed bag-of-words embedder for offline use.

    Each normalized token increments bucket ``blake2b-64(token) mod dim``; the count
    vector is then L2-normalized. Texts without tokens map to the zero vector.
    """

    def __init__(self, dim: int = 256):
        super().__init__()
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.backend_id = f"hashing-bow-{dim}"

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dim

    def _embed_batch(self, texts):
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            for tok in normalize_text(text):
                out[i, self.bucket(tok)] += 1.0
            norm = np.linalg.norm(out[i])
            if norm > 0:
                out[i] /= norm
        return out


class HTTPEmbedder(Embedder):
    """Remote embeddings endpoint speaking ``{"model", "input"} -> {"data": [{"embedding"}]}``."""

    def __init__(self, url: str, model: str, *, api_key_env: str = "OPENAI_API_KEY",
                 timeout: float = 60.0, batch_size: int = 64, client: httpx.Client | None = None):
        super().__init__()
        self.url = url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.batch_size = batch_size
        self.backend_id = f"http-embed:{model}@{url}"
        self._client = client

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.api_key_env)
        return {"Authorization": f"Bearer {key}"} if key else {}

    def _embed_batch(self, texts):
        client = self._client or httpx.Client(timeout=self.timeout)
        vectors = []
        try:
            for start in range(0, len(texts), self.batch_size):
                chunk = texts[start:start + self.batch_size]
                try:
                    resp = client.post(self.url, json={"model": self.model, "input": chunk},
                                       headers=self._headers())
                    resp.raise_for_status()
                    data = resp.json()["data"]
                    vectors.extend(item["embedding"] for item in data)
                except httpx.HTTPError as exc:
                    raise EmbeddingError(f"embedding request failed: {exc}", diagnostics=str(exc)) from exc
                except (KeyError, TypeError, ValueError) as exc:
                    raise EmbeddingError("malformed embedding payload", retriable=False,
                                         diagnostics=resp.text[:200]) from exc
        finally:
            if self._client is None:
                client.close()
        return np.asarray(vectors, dtype=np.float64)


class CachedEmbedder(Embedder):
    """In-memory cache in front of another embedder, keyed by (backend id, text)."""

    def __init__(self, backend: Embedder):
        super().__init__()
        self.backend = backend
        self.backend_id = backend.backend_id
        self._cache: dict[tuple[str, str], np.ndarray] = {}

    def embed_batch(self, texts):
        texts = list(texts)
        missing = [t for t in dict.fromkeys(texts) if (self.backend_id, t) not in self._cache]
        if missing:
            vectors = self.backend.embed_batch(missing)
            with self._lock:
                for t, v in zip(missing, vectors):
                    self._cache.setdefault((self.backend_id, t), v)
        return np.stack([self._cache[(self.backend_id, t)] for t in texts]) if texts else np.zeros((0, 0))


def embed(text: str, backend: Embedder) -> np.ndarray:
    return backend.embed_batch([text])[0]


def _exact_dot(a: np.ndarray, b: np.ndarray) -> float:
    return math.fsum((a * b).tolist())


def _pow2_rescale(v: np.ndarray) -> np.ndarray:
    # Power-of-two scaling is exact, so it only guards against under/overflow.
    peak = float(np.max(np.abs(v))) if v.size else 0.0
    if peak == 0.0:
        return v
    return np.ldexp(v, -math.frexp(peak)[1])


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors.

    Uses exactly rounded sums, so the value does not depend on summation order.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    a, b = _pow2_rescale(a), _pow2_rescale(b)
    na = math.sqrt(_exact_dot(a, a))
    nb = math.sqrt(_exact_dot(b, b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return max(-1.0, min(1.0, _exact_dot(a, b) / (na * nb)))


@dataclass(frozen=True)
class DemonstrationPool:
    target_id: str
    entries: tuple[tuple[AnnotatedSentence, float], ...]

    @property
    def demos(self) -> list[AnnotatedSentence]:
        return [a for a, _ in self.entries]

    @property
    def ids(self) -> list[str]:
        return [a.id for a, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


class DemonstrationRetriever(BaseEstimator):
    """Select the annotated sentences most similar to a target.

    Parameters
    ----------
    embedder : Embedder, default=None
        Embedding backend; ``None`` means ``HashingEmbedder()``. Wrapped in a
        ``CachedEmbedder`` during ``fit``.
    pool_size : int, default=10
        Number of demonstrations returned per target.
    leakage_guard : bool, default=True
        Exclude corpus sentences whose normalized text equals the target's.
    """

    def __init__(self, embedder=None, pool_size=10, leakage_guard=True):
        self.embedder = embedder
        self.pool_size = pool_size
        self.leakage_guard = leakage_guard

    def fit(self, corpus, y=None):
        corpus = check_corpus(corpus, allow_empty=False)
        check_positive_int(self.pool_size, "pool_size")
        backend = self.embedder if self.embedder is not None else HashingEmbedder()
        self.embedder_ = backend if isinstance(backend, CachedEmbedder) else CachedEmbedder(backend)
        self.corpus_ = corpus
        self.embeddings_ = self.embedder_.embed_batch([a.text for a in corpus])
        norms = np.linalg.norm(self.embeddings_, axis=1)
        if np.any(norms == 0):
            bad = [corpus[i].id for i in np.flatnonzero(norms == 0)]
            raise ValueError(f"zero embedding for corpus sentences {bad[:5]}")
        self.unit_embeddings_ = self.embeddings_ / norms[:, None]
        return self

    def select(self, target) -> DemonstrationPool:
        check_is_fitted(self, "corpus_")
        target = check_sentence(target)
        query = self.embedder_.embed_batch([target.text])[0]
        qnorm = float(np.linalg.norm(query))
        if qnorm == 0:
            raise ValueError(f"zero embedding for target {target.id!r}")

        eligible = np.ones(len(self.corpus_), dtype=bool)
        if self.leakage_guard:
            for i, a in enumerate(self.corpus_):
                if a.sentence.tokens == target.tokens:
                    eligible[i] = False
        candidates = np.flatnonzero(eligible)
        if candidates.size == 0:
            raise EmptyPoolError(f"empty pool for target {target.id!r}: every sentence excluded")

        approx = self.unit_embeddings_[candidates] @ (query / qnorm)
        k = min(self.pool_size, candidates.size)
        cutoff = np.partition(approx, candidates.size - k)[candidates.size - k]
        shortlist = candidates[approx >= cutoff - _RESCORE_MARGIN]

        scored = [(cosine_similarity(query, self.embeddings_[i]), int(i)) for i in shortlist]
        top = heapq.nsmallest(k, scored, key=lambda s: (-s[0], s[1]))
        return DemonstrationPool(target.id, tuple((self.corpus_[i], sim) for sim, i in top))

    def transform(self, sentences) -> list[DemonstrationPool]:
        return [self.select(s) for s in sentences]


def select_demonstrations(target: Sentence, corpus: AnnotatedCorpus, pool_size: int = 10,
                          backend: Embedder | None = None, leakage_guard: bool = True) -> DemonstrationPool:
    retriever = DemonstrationRetriever(embedder=backend, pool_size=pool_size, leakage_guard=leakage_guard)
    return retriever.fit(corpus).select(target)
