"""Deterministic text embeddings.

The built-in provider is a signed feature-hashing embedder. It exists so that
every retrieval and consolidation decision in this package is reproducible
byte-for-byte across processes and machines; swap in a semantic provider
behind the same interface when real embeddings are wanted.

Hash recipe (the contract tests recompute this independently):

1. Tokenize: lowercase the text and take maximal runs of ``[a-z0-9]``;
   whitespace and punctuation both act as separators.
2. For each token, hash with ``blake2b(token.encode("utf-8"), digest_size=8)``
   and read the digest as a big-endian unsigned integer ``h``.
3. Bucket ``h % dim`` accumulates ``+1`` when the top digest bit
   (``h >> 63``) is 0, else ``-1``.
4. L2-normalize the bucket counts. No tokens at all yields the zero vector.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Callable, Protocol

DEFAULT_DIM = 256

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens; everything else separates."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-dimension embedding; unit L2 norm or the all-zero vector."""

    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)


def _token_signature(token: str, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    h = int.from_bytes(digest, "big")
    sign = 1.0 if (h >> 63) == 0 else -1.0
    return h % dim, sign


def hash_embed(text: str, dim: int = DEFAULT_DIM) -> EmbeddingVector:
    """Embed ``text`` with the signed feature-hashing recipe above."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    buckets = [0.0] * dim
    for token in tokenize(text):
        index, sign = _token_signature(token, dim)
        buckets[index] += sign
    norm = math.sqrt(sum(v * v for v in buckets))
    if norm == 0.0:
        return EmbeddingVector(values=tuple(buckets))
    return EmbeddingVector(values=tuple(v / norm for v in buckets))


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Cosine similarity; 0.0 whenever either vector is all zeros."""
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} != {v.dim}")
    norm_u = u.norm()
    norm_v = v.norm()
    if norm_u == 0.0 or norm_v == 0.0:
        return 0.0
    dot = sum(a * b for a, b in zip(u.values, v.values))
    return dot / (norm_u * norm_v)


def mean_vector(vectors: list[EmbeddingVector], dim: int) -> EmbeddingVector:
    """Plain componentwise mean; zero vector for an empty list."""
    if not vectors:
        return EmbeddingVector(values=(0.0,) * dim)
    acc = [0.0] * dim
    for vec in vectors:
        if vec.dim != dim:
            raise ValueError(f"dimension mismatch: {vec.dim} != {dim}")
        for i, value in enumerate(vec.values):
            acc[i] += value
    n = len(vectors)
    return EmbeddingVector(values=tuple(v / n for v in acc))


class EmbeddingProvider(Protocol):
    """Anything that turns text into a fixed-dimension vector."""

    @property
    def dim(self) -> int: ...

    def embed(self, text: str) -> EmbeddingVector: ...


class HashEmbedder:
    """Default provider: deterministic signed feature hashing."""

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, text: str) -> EmbeddingVector:
        return hash_embed(text, self._dim)


_PROVIDER_FACTORIES: dict[str, Callable[[int], EmbeddingProvider]] = {
    "hash": lambda dim: HashEmbedder(dim),
}


def register_provider(name: str, factory: Callable[[int], EmbeddingProvider]) -> None:
    """Register an external provider factory under a config name."""
    _PROVIDER_FACTORIES[name] = factory


def provider_from_config(config: dict | None) -> EmbeddingProvider:
    """Build a provider from an ``embedding`` config section.

    Recognized keys: ``provider`` (default ``"hash"``) and ``dim``
    (default 256). Unknown provider names raise ``ValueError`` naming
    the offending key.
    """
    config = config or {}
    name = config.get("provider", "hash")
    dim = config.get("dim", DEFAULT_DIM)
    factory = _PROVIDER_FACTORIES.get(name)
    if factory is None:
        known = ", ".join(sorted(_PROVIDER_FACTORIES))
        raise ValueError(f"embedding.provider: unknown provider {name!r} (known: {known})")
    return factory(dim)
