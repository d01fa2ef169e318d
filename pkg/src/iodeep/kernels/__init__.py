"""Hot scoring kernels with a compiled core and a pure-Python fallback.

The Cython build (``iodeep.kernels._native``) is preferred when importable;
set ``IODEEP_PURE_KERNELS=1`` to force the pure implementation. Both expose
the same five functions and must produce identical results.
"""

from __future__ import annotations

import os

from iodeep.kernels import pure

if os.environ.get("IODEEP_PURE_KERNELS") == "1":
    _impl = pure
    IMPLEMENTATION = "pure"
else:
    try:
        from iodeep.kernels import _native as _impl  # type: ignore[no-redef]

        IMPLEMENTATION = "native"
    except ImportError:
        _impl = pure
        IMPLEMENTATION = "pure"

fnv1a64 = _impl.fnv1a64
embed_token_counts = _impl.embed_token_counts
cosine_scores = _impl.cosine_scores
topk_desc = _impl.topk_desc
bm25_accumulate = _impl.bm25_accumulate

__all__ = [
    "IMPLEMENTATION",
    "bm25_accumulate",
    "cosine_scores",
    "embed_token_counts",
    "fnv1a64",
    "pure",
    "topk_desc",
]
