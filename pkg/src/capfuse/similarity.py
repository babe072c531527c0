"""Pluggable similarity scoring for (image, text) and (text, text) pairs.

Stands in for heavyweight vision/text encoders: real embeddings can be
dropped in via VECF files, and a deterministic hashed bag-of-words
embedder covers text with no precomputed vector. All scores are cosines
in [-1, 1]; the all-zero vector scores 0 against anything.
"""

from __future__ import annotations

import hashlib
from typing import Optional, Protocol

import numpy as np

from .text import normalize_text
from .vecfile import load_vectors

DEFAULT_HASH_BUCKETS = 256


def cosine(a, b) -> float:
    """a.b / (|a||b|); zero if either vector is all-zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"cosine: dimension mismatch, {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def hashed_bag_of_words(text: str, buckets: int = DEFAULT_HASH_BUCKETS) -> np.ndarray:
    """Deterministic token-count embedding: stable hash into ``buckets`` bins."""
    vec = np.zeros(buckets, dtype=np.float64)
    for token in normalize_text(text).split():
        digest = hashlib.md5(token.encode("utf-8")).digest()
        vec[int.from_bytes(digest[:8], "little") % buckets] += 1.0
    return vec


class SimilarityProvider(Protocol):
    """Behavioral contract: deterministic scores in [-1, 1], self-maximal."""

    def score_image_text(self, feat, text: str) -> float: ...

    def score_text_text(self, a: str, b: str) -> float: ...


class CosineEmbeddingProvider:
    """Cosine scoring over a text-embedding table with a hashed fallback.

    Text pairs use table vectors when both texts (after normalization) are
    present, otherwise both sides fall back to hashed bag-of-words so the
    dimensions always agree. Image-text scores compare the image feature
    against the table vector (dimension must match) or a hashed embedding
    at the feature's dimension.
    """

    def __init__(self, table: Optional[dict] = None,
                 hash_buckets: int = DEFAULT_HASH_BUCKETS):
        self.table = {normalize_text(k): np.asarray(v, dtype=np.float64)
                      for k, v in (table or {}).items()}
        self.hash_buckets = hash_buckets

    @classmethod
    def from_file(cls, path, hash_buckets: int = DEFAULT_HASH_BUCKETS
                  ) -> "CosineEmbeddingProvider":
        vectors, _ = load_vectors(path)
        return cls(table=vectors, hash_buckets=hash_buckets)

    def _text_vector(self, text: str, dim: Optional[int] = None) -> np.ndarray:
        key = normalize_text(text)
        vec = self.table.get(key)
        if vec is not None and (dim is None or len(vec) == dim):
            return vec
        if vec is not None:
            raise ValueError(
                f"embedding for {key!r} has dimension {len(vec)}, expected {dim}")
        return hashed_bag_of_words(text, dim if dim is not None else self.hash_buckets)

    def score_text_text(self, a: str, b: str) -> float:
        ka, kb = normalize_text(a), normalize_text(b)
        if ka in self.table and kb in self.table:
            return cosine(self.table[ka], self.table[kb])
        return cosine(hashed_bag_of_words(a, self.hash_buckets),
                      hashed_bag_of_words(b, self.hash_buckets))

    def score_image_text(self, feat, text: str) -> float:
        vector = feat.vector if hasattr(feat, "vector") else np.asarray(feat)
        return cosine(vector, self._text_vector(text, dim=len(vector)))
