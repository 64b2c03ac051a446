"""Document embeddings: angular distance, sentence budgets, gradient traces.

A document embedding is the running sum of its sentence embeddings; the
gradient at sentence i (i >= 2) is the angular change of the normalized
running sum when sentence i is added. An adaptive budget stops embedding at
the first gradient below the configured limit, because later sentences no
longer move the document vector.
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np


class EmbeddingError(ValueError):
    """Domain error in embedding inputs (empty text, zero vectors, shape)."""


class BackendError(RuntimeError):
    """Embedding backend failure (unreachable service, protocol mismatch)."""


def normalize(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0 or not np.isfinite(norm):
        raise EmbeddingError("cannot normalize zero or non-finite vector")
    return vector / norm


def angular_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Angle in radians between two vectors: arccos of clamped cosine similarity.

    Lower angle means higher semantic similarity; range [0, pi].
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise EmbeddingError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise EmbeddingError("angular distance undefined for zero vector")
    cos = float(np.dot(u, v)) / (nu * nv)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise EmbeddingError("cosine similarity undefined for zero vector")
    return float(np.dot(u, v)) / (nu * nv)


@dataclass(frozen=True)
class FixedBudget:
    """Embed exactly n sentences (or all of them when the document is shorter)."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("fixed budget must be >= 1")


@dataclass(frozen=True)
class AdaptiveBudget:
    """Stop at the first gradient below gradient_limit, never before 2 sentences."""

    gradient_limit: float
    hard_cap: int = 200

    def __post_init__(self):
        if self.gradient_limit <= 0:
            raise ValueError("gradient limit must be > 0")
        if self.hard_cap < 2:
            raise ValueError("hard cap must be >= 2")


Budget = Union[FixedBudget, AdaptiveBudget]


@dataclass
class DocumentEmbedding:
    """Normalized document vector plus the gradient trace behind it."""

    vector: np.ndarray
    sentences_used: int
    gradients: list[float] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)


class EmbeddingBackend:
    """Turns one sentence into one fixed-dimension vector, deterministically."""

    name: str = "backend"
    dim: int = 0

    def embed_sentence(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def embed_sentences(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed_sentence(t) for t in texts]


class MockBackend(EmbeddingBackend):
    """Deterministic test backend: tokens hash to pseudo-random unit vectors.

    A sentence vector is the sum of its whitespace tokens' vectors, summed in
    sorted token order so that any permutation of the same tokens embeds to
    the bitwise-identical vector (float addition is order-sensitive). The
    backend is linear over token multisets and fully reproducible from
    (seed, dim).
    """

    def __init__(self, seed: int = 0, dim: int = 256):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.seed = int(seed)
        self.dim = int(dim)
        self.name = f"mock:{self.seed}:{self.dim}"
        self._key = self.seed.to_bytes(8, "little", signed=True)
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _token_vector(self, token: str) -> np.ndarray:
        with self._lock:
            vec = self._cache.get(token)
        if vec is not None:
            return vec
        digest = hashlib.blake2b(token.encode("utf-8"), key=self._key,
                                 digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        vec = rng.standard_normal(self.dim)
        vec /= np.linalg.norm(vec)
        with self._lock:
            self._cache[token] = vec
        return vec

    def embed_sentence(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            raise EmbeddingError("cannot embed empty sentence")
        out = np.zeros(self.dim)
        for token in sorted(tokens):
            out += self._token_vector(token)
        return out


class ScriptedBackend(EmbeddingBackend):
    """Returns pre-chosen vectors in call order; for constructing exact traces."""

    def __init__(self, vectors: Iterable[np.ndarray], name: str = "scripted"):
        self._vectors = [np.asarray(v, dtype=np.float64) for v in vectors]
        if not self._vectors:
            raise ValueError("scripted backend needs at least one vector")
        self.dim = self._vectors[0].shape[0]
        self.name = name
        self._calls = 0

    def embed_sentence(self, text: str) -> np.ndarray:
        vec = self._vectors[self._calls % len(self._vectors)]
        self._calls += 1
        return vec


_EMBED_CHUNK = 32


def embed_document(
    sentences: Sequence[str],
    backend: EmbeddingBackend,
    budget: Budget,
    snapshots_at: Iterable[int] = (),
) -> DocumentEmbedding:
    """Sum sentence embeddings under a budget and return the normalized result.

    The gradient g_i (i >= 2) is the angular distance between the running sums
    before and after sentence i. FixedBudget(n) uses min(n, len(sentences))
    sentences; AdaptiveBudget stops at the first i >= 2 with g_i below the
    limit, at the hard cap, or at sentence exhaustion. Snapshots of the
    normalized running sum are recorded for each requested sentence count;
    counts beyond the stop point resolve to the final vector.
    """
    if not sentences:
        raise EmbeddingError("cannot embed empty sentence list")
    wanted = set(int(k) for k in snapshots_at)
    if isinstance(budget, FixedBudget):
        cap = min(budget.n, len(sentences))
        limit = None
    else:
        cap = min(budget.hard_cap, len(sentences))
        limit = budget.gradient_limit

    running: Optional[np.ndarray] = None
    gradients: list[float] = []
    snapshots: dict[int, np.ndarray] = {}
    buffered: list[np.ndarray] = []
    used = 0
    for i in range(1, cap + 1):
        if not buffered:
            chunk = sentences[i - 1 : min(i - 1 + _EMBED_CHUNK, cap)]
            buffered = list(backend.embed_sentences(chunk))
        vec = np.asarray(buffered.pop(0), dtype=np.float64)
        new_sum = vec.copy() if running is None else running + vec
        if i >= 2:
            gradients.append(angular_distance(running, new_sum))
        running = new_sum
        used = i
        if i in wanted:
            snapshots[i] = normalize(running)
        if limit is not None and i >= 2 and gradients[-1] < limit:
            break

    final = normalize(running)
    for k in wanted:
        if k >= used and k not in snapshots:
            snapshots[k] = final
    return DocumentEmbedding(vector=final, sentences_used=used,
                             gradients=gradients, snapshots=snapshots)


class HttpBackend(EmbeddingBackend):
    """Client for the embedding sidecar service (POST /embed, GET /health)."""

    def __init__(self, endpoint: str, model_id: str = "default",
                 timeout_s: float = 120.0):
        import requests

        self.endpoint = endpoint.rstrip("/")
        self.model_id = model_id
        self.timeout_s = timeout_s
        self._session = requests.Session()
        try:
            resp = self._session.get(f"{self.endpoint}/health", timeout=timeout_s)
            resp.raise_for_status()
            health = resp.json()
        except Exception as exc:  # noqa: BLE001 - surfaced as one typed error
            raise BackendError(f"embedding service unreachable: {exc}") from exc
        self.dim = int(health["D"])
        self.name = f"http:{health.get('model_id', model_id)}"

    def embed_sentence(self, text: str) -> np.ndarray:
        return self.embed_sentences([text])[0]

    def embed_sentences(self, texts: Sequence[str]) -> list[np.ndarray]:
        import requests

        if not texts:
            return []
        try:
            resp = self._session.post(
                f"{self.endpoint}/embed",
                json={"sentences": list(texts), "model_id": self.model_id},
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            payload = resp.json()
        except requests.RequestException as exc:
            raise BackendError(f"embed request failed: {exc}") from exc
        vectors = [np.asarray(v, dtype=np.float64) for v in payload["vectors"]]
        for vec in vectors:
            if vec.shape != (self.dim,):
                raise BackendError(
                    f"service returned dimension {vec.shape}, expected {self.dim}"
                )
        return vectors


def backend_from_spec(spec: str) -> EmbeddingBackend:
    """Build a backend from a config string.

    "mock:<seed>" or "mock:<seed>:<dim>" makes the deterministic test backend;
    an http(s) URL connects to the embedding sidecar.
    """
    if spec.startswith("mock"):
        parts = spec.split(":")
        seed = int(parts[1]) if len(parts) > 1 and parts[1] else 0
        dim = int(parts[2]) if len(parts) > 2 else 256
        return MockBackend(seed=seed, dim=dim)
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpBackend(spec)
    raise ValueError(f"unknown backend spec {spec!r} (use mock:<seed>[:dim] or an URL)")
