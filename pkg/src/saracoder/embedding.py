"""768-dimensional snippet embeddings behind a pluggable provider.

Two providers share one contract (dimension 768, L2 normalization,
determinism, order preservation): a local feature-hashing provider that
needs no model, and a remote provider speaking the HTTP protocol
``POST /embed {"texts": [...]} -> {"vectors": [[...768 floats]]}``.
Vectors are cached by the fingerprint of their normalized text.
"""

from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .errors import TransportError
from .textnorm import fingerprint, normalize_text, subtokens

EMBED_DIM = 768
MAX_SUBTOKENS = 512
DEFAULT_CACHE_ENTRIES = 100_000


@dataclass(eq=False)
class EmbeddingVector:
    """L2-normalized 768-dim vector plus the tag of the provider that made it."""

    values: np.ndarray
    source: str

    def __post_init__(self):
        if self.values.shape != (EMBED_DIM,):
            raise ValueError(f"embedding must have dimension {EMBED_DIM}, got {self.values.shape}")
        norm = float(np.linalg.norm(self.values))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding must be L2-normalized, got norm {norm!r}")


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Dot product of two normalized vectors; in [-1, 1]."""
    if a.values.shape != b.values.shape:
        raise ValueError("dimension mismatch between embedding vectors")
    return float(np.dot(a.values, b.values))


class LocalHashProvider:
    """Deterministic signed feature hashing of sub-tokens into 768 buckets.

    A fast stand-in for a neural code encoder that honors the same
    provider contract; it never fails and needs no network.
    """

    name = "local"

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self._embed_one(text) for text in texts]

    @staticmethod
    def _bucket(token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        index = int.from_bytes(digest[:4], "big") % EMBED_DIM
        sign = 1.0 if digest[4] & 1 else -1.0
        return index, sign

    def _embed_one(self, text: str) -> np.ndarray:
        norm = normalize_text(text)
        vec = np.zeros(EMBED_DIM, dtype=np.float64)
        for token in subtokens(norm)[:MAX_SUBTOKENS]:
            index, sign = self._bucket(token)
            vec[index] += sign
        if not vec.any():
            # Token-free text (e.g. pure punctuation): hash the whole text.
            index, _ = self._bucket(norm or "\x00")
            vec[index] = 1.0
        return vec / np.linalg.norm(vec)


class RemoteProvider:
    """Client for an embedding service exposing POST /embed."""

    name = "remote"

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 2):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        attempts = self.retries + 1
        last_error: Exception | None = None
        response = None
        for _ in range(attempts):
            try:
                response = requests.post(
                    f"{self.endpoint}/embed", json={"texts": list(texts)}, timeout=self.timeout
                )
                break
            except requests.RequestException as exc:
                last_error = exc
        if response is None:
            raise TransportError(
                f"embedding endpoint unreachable after {attempts} attempts: {last_error}",
                attempts=attempts,
            )
        if response.status_code >= 400:
            detail = ""
            try:
                detail = response.json().get("error", "")
            except ValueError:
                pass
            raise TransportError(
                f"embedding endpoint returned {response.status_code}: {detail}",
                attempts=1,
            )
        vectors = response.json().get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise TransportError("embedding endpoint returned a malformed vector list")
        out = []
        for raw in vectors:
            vec = np.asarray(raw, dtype=np.float64)
            if vec.shape != (EMBED_DIM,):
                raise TransportError(f"embedding endpoint returned dimension {vec.shape}")
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                raise TransportError("embedding endpoint returned a zero vector")
            out.append(vec / norm)
        return out


class Embedder:
    """Provider wrapper with an LRU cache keyed by normalized-text fingerprint.

    Thread-safe; a cache hit returns the bit-identical vector computed
    first. Results with the cache enabled equal results with it
    disabled.
    """

    def __init__(
        self,
        provider,
        cache_entries: int = DEFAULT_CACHE_ENTRIES,
        disk_cache_dir: str | Path | None = None,
    ):
        self.provider = provider
        self.cache_entries = cache_entries
        self.disk_cache_dir = Path(disk_cache_dir) if disk_cache_dir else None
        self._cache: OrderedDict[str, EmbeddingVector] = OrderedDict()
        self._lock = threading.Lock()
        if self.disk_cache_dir:
            self.disk_cache_dir.mkdir(parents=True, exist_ok=True)

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        """One vector per input text, order-preserving."""
        keys = []
        for text in texts:
            if not normalize_text(text):
                raise ValueError("cannot embed text that is empty after normalization")
            keys.append(fingerprint(text))

        results: dict[str, EmbeddingVector] = {}
        missing_keys: list[str] = []
        missing_texts: list[str] = []
        with self._lock:
            for key, text in zip(keys, texts):
                if key in results or key in missing_keys:
                    continue
                hit = self._cache_get(key)
                if hit is not None:
                    results[key] = hit
                else:
                    missing_keys.append(key)
                    missing_texts.append(text)

        if missing_texts:
            vectors = self.provider.embed_batch(missing_texts)
            if len(vectors) != len(missing_texts):
                raise TransportError("provider returned a mismatched batch size")
            with self._lock:
                for key, vec in zip(missing_keys, vectors):
                    entry = self._cache_get(key)
                    if entry is None:
                        entry = EmbeddingVector(values=vec, source=self.provider.name)
                        self._cache_put(key, entry)
                    results[key] = entry

        return [results[key] for key in keys]

    # -- cache internals (caller holds the lock) ---------------------------

    def _cache_get(self, key: str) -> EmbeddingVector | None:
        if self.cache_entries <= 0:
            return None
        entry = self._cache.get(key)
        if entry is not None:
            self._cache.move_to_end(key)
            return entry
        if self.disk_cache_dir:
            spill = self.disk_cache_dir / f"{key}.npy"
            if spill.is_file():
                values = np.load(spill)
                entry = EmbeddingVector(values=values, source=self.provider.name)
                self._cache_put(key, entry, spill=False)
                return entry
        return None

    def _cache_put(self, key: str, entry: EmbeddingVector, spill: bool = True) -> None:
        if self.cache_entries <= 0:
            return
        self._cache[key] = entry
        self._cache.move_to_end(key)
        while len(self._cache) > self.cache_entries:
            self._cache.popitem(last=False)
        if spill and self.disk_cache_dir:
            spill_path = self.disk_cache_dir / f"{key}.npy"
            tmp_path = spill_path.with_suffix(".npy.tmp")
            with open(tmp_path, "wb") as fh:
                np.save(fh, entry.values)
            tmp_path.replace(spill_path)


def check_provider_contract(provider, tolerance: float = 1e-5) -> None:
    """Assert the provider contract: 768 dims, unit norm, determinism,
    positional order preservation. Raises AssertionError on violation.

    Runs against any provider object with ``embed_batch``, including a
    RemoteProvider pointed at a live service.
    """
    texts = ["a = 1", "total = alpha + beta", "def f(x):\n    return x + 1"]

    first = provider.embed_batch(texts)
    assert len(first) == len(texts), "batch size not preserved"
    for vec in first:
        arr = np.asarray(vec, dtype=np.float64)
        assert arr.shape == (EMBED_DIM,), f"dimension {arr.shape} != ({EMBED_DIM},)"
        assert abs(float(np.linalg.norm(arr)) - 1.0) <= tolerance, "vector not L2-normalized"

    again = provider.embed_batch(texts)
    for a, b in zip(first, again):
        assert np.array_equal(np.asarray(a), np.asarray(b)), "repeated call not deterministic"

    # Duplicate inside one batch pins positional mapping exactly.
    tripled = provider.embed_batch([texts[0], texts[1], texts[0]])
    assert np.array_equal(np.asarray(tripled[0]), np.asarray(tripled[2])), (
        "identical texts in one batch produced different vectors"
    )
    assert not np.array_equal(np.asarray(tripled[0]), np.asarray(tripled[1])), (
        "distinct texts produced identical vectors"
    )

    reordered = provider.embed_batch(list(reversed(texts)))
    for vec, ref in zip(reordered, reversed(first)):
        assert np.allclose(np.asarray(vec), np.asarray(ref), atol=tolerance), (
            "batch order not preserved"
        )
