"""Kernel equivalence: the compiled core and the pure fallback must agree."""

from __future__ import annotations

import numpy as np
import pytest

from iodeep import kernels
from iodeep.kernels import pure

HAVE_NATIVE = kernels.IMPLEMENTATION == "native"

try:
    from iodeep.kernels import _native
except ImportError:
    _native = None

IMPLS = [pure] + ([_native] if _native is not None else [])


def impl_ids():
    return ["pure"] + (["native"] if _native is not None else [])


@pytest.fixture(params=IMPLS, ids=impl_ids())
def impl(request):
    return request.param


def fnv1a64_oracle(data: bytes) -> int:
    h = 14695981039346656037
    for byte in data:
        h = ((h ^ byte) * 1099511628211) % (1 << 64)
    return h


class TestFnv1a:
    @pytest.mark.parametrize("data", [b"", b"a", b"alpha", b"Ti3SiC2", bytes(range(256))])
    def test_matches_reference(self, impl, data):
        assert impl.fnv1a64(data) == fnv1a64_oracle(data)

    def test_known_vector(self, impl):
        # FNV-1a("") is the offset basis by definition
        assert impl.fnv1a64(b"") == 14695981039346656037


class TestEmbedCounts:
    def test_counts_land_in_hashed_buckets(self, impl):
        tokens = [b"alpha", b"alpha", b"beta"]
        counts = impl.embed_token_counts(tokens, 64)
        assert counts[fnv1a64_oracle(b"alpha") % 64] == 2.0
        assert counts[fnv1a64_oracle(b"beta") % 64] == 1.0
        assert counts.sum() == 3.0

    def test_implementations_agree(self):
        if _native is None:
            pytest.skip("native kernels not built")
        tokens = [t.encode() for t in "the quick brown fox jumps over the lazy dog".split()]
        for dim in (8, 64, 257):
            assert np.array_equal(
                pure.embed_token_counts(tokens, dim), _native.embed_token_counts(tokens, dim)
            )


class TestCosine:
    def test_scores_match_python_loop(self, impl):
        rng = np.random.default_rng(11)
        matrix = rng.standard_normal((20, 8)).astype(np.float32)
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        query = matrix[3]
        scores = impl.cosine_scores(matrix, query)
        for i in range(20):
            oracle = sum(float(matrix[i, j]) * float(query[j]) for j in range(8))
            assert scores[i] == pytest.approx(oracle, abs=1e-12)

    def test_implementations_agree_on_ranking(self):
        if _native is None:
            pytest.skip("native kernels not built")
        rng = np.random.default_rng(5)
        matrix = rng.standard_normal((300, 64)).astype(np.float32)
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        query = rng.standard_normal(64).astype(np.float32)
        query /= np.linalg.norm(query)
        sp = pure.cosine_scores(matrix, query)
        sn = _native.cosine_scores(matrix, query)
        assert np.allclose(sp, sn, atol=1e-12)
        assert pure.topk_desc(sp, 10) == _native.topk_desc(sn, 10)


class TestTopK:
    def test_ties_break_by_index(self, impl):
        scores = np.asarray([0.5, 0.9, 0.5, 0.9], dtype=np.float64)
        assert impl.topk_desc(scores, 4) == [1, 3, 0, 2]

    def test_k_larger_than_n(self, impl):
        scores = np.asarray([0.1, 0.2], dtype=np.float64)
        assert impl.topk_desc(scores, 10) == [1, 0]


class TestBm25Accumulate:
    def test_matches_formula(self, impl):
        n = 4
        scores = np.zeros(n, dtype=np.float64)
        doc_ids = np.asarray([0, 2], dtype=np.int32)
        tfs = np.asarray([2.0, 1.0], dtype=np.float32)
        len_norm = np.asarray([1.0, 0.5, 2.0, 1.0], dtype=np.float32)
        idf, k1, b = 1.3, 1.2, 0.75
        impl.bm25_accumulate(scores, doc_ids, tfs, idf, k1, b, len_norm)
        for doc, tf in [(0, 2.0), (2, 1.0)]:
            expected = idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * float(len_norm[doc])))
            assert scores[doc] == pytest.approx(expected, abs=1e-12)
        assert scores[1] == scores[3] == 0.0

    def test_implementations_agree(self):
        if _native is None:
            pytest.skip("native kernels not built")
        rng = np.random.default_rng(3)
        n, m = 50, 30
        doc_ids = rng.integers(0, n, size=m).astype(np.int32)
        tfs = rng.integers(1, 5, size=m).astype(np.float32)
        len_norm = rng.uniform(0.3, 3.0, size=n).astype(np.float32)
        a = np.zeros(n)
        b = np.zeros(n)
        pure.bm25_accumulate(a, doc_ids, tfs, 0.7, 1.2, 0.75, len_norm)
        _native.bm25_accumulate(b, doc_ids, tfs, 0.7, 1.2, 0.75, len_norm)
        assert np.allclose(a, b, atol=1e-12)


def test_pure_override_env(monkeypatch):
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "from iodeep import kernels; print(kernels.IMPLEMENTATION)"],
        capture_output=True,
        text=True,
        env={"IODEEP_PURE_KERNELS": "1", "PATH": "/usr/bin:/bin"},
    )
    assert out.stdout.strip() == "pure"
