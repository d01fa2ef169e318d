"""Pure-Python/numpy implementations of the hot scoring kernels.

These are the fallback twins of ``_native`` (Cython). Both sides must agree:
the equivalence suite in tests/test_kernels.py runs every kernel against the
same fixtures on both implementations.
"""

from __future__ import annotations

import numpy as np

FNV1A64_OFFSET = 0xCBF29CE484222325
FNV1A64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = FNV1A64_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV1A64_PRIME) & _MASK64
    return h


def embed_token_counts(tokens: list[bytes], dim: int) -> np.ndarray:
    """Hash each token into one of ``dim`` buckets and count (float32)."""
    counts = np.zeros(dim, dtype=np.float32)
    for token in tokens:
        counts[fnv1a64(token) % dim] += 1.0
    return counts


def cosine_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Float64 dot products of unit rows against a unit query."""
    return matrix.astype(np.float64) @ query.astype(np.float64)


def topk_desc(scores: np.ndarray, k: int) -> list[int]:
    """Indices of the k largest scores, ties broken by ascending index."""
    order = np.lexsort((np.arange(len(scores)), -scores))
    return [int(i) for i in order[:k]]


def bm25_accumulate(
    scores: np.ndarray,
    doc_ids: np.ndarray,
    tfs: np.ndarray,
    idf: float,
    k1: float,
    b: float,
    len_norm: np.ndarray,
) -> None:
    """Add one query term's BM25 contribution to ``scores`` in place.

    ``len_norm`` holds doc_len/avg_len per document (float64; the scoring
    contract is exact double arithmetic); ``doc_ids``/``tfs`` are the term's
    postings.
    """
    tf = tfs.astype(np.float64)
    denom = tf + k1 * (1.0 - b + b * len_norm.astype(np.float64)[doc_ids])
    # np.add.at accumulates repeated doc ids, matching the native loop
    np.add.at(scores, doc_ids, idf * tf * (k1 + 1.0) / denom)
