#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from iodeep.kernels import pure

try:
    from iodeep.kernels import _native as native
except ImportError:
    native = None


def timeit(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def bench_embed(impl, tokens, dim, repeats):
    return timeit(lambda: impl.embed_token_counts(tokens, dim), repeats)


def bench_cosine(impl, matrix, query, repeats):
    return timeit(lambda: impl.topk_desc(impl.cosine_scores(matrix, query), 10), repeats)


def bench_bm25(impl, n_docs, postings, len_norm, repeats):
    def run():
        scores = np.zeros(n_docs, dtype=np.float64)
        for doc_ids, tfs, idf in postings:
            impl.bm25_accumulate(scores, doc_ids, tfs, idf, 1.2, 0.75, len_norm)

    return timeit(run, repeats)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(1234)
    words = [f"tok{i}".encode() for i in range(2000)]
    tokens = [words[i] for i in rng.integers(0, len(words), size=200_000)]

    matrix = rng.standard_normal((20_000, 64)).astype(np.float32)
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    query = rng.standard_normal(64).astype(np.float32)
    query /= np.linalg.norm(query)

    n_docs = 50_000
    len_norm = rng.uniform(0.3, 3.0, size=n_docs)
    postings = []
    for _ in range(30):  # 30 query terms
        m = int(rng.integers(500, 5_000))
        postings.append(
            (
                rng.integers(0, n_docs, size=m).astype(np.int32),
                rng.integers(1, 6, size=m).astype(np.float32),
                float(rng.uniform(0.2, 3.0)),
            )
        )

    impls = [("pure", pure)] + ([("native", native)] if native is not None else [])
    rows = []
    for name, impl in impls:
        rows.append(
            (
                name,
                bench_embed(impl, tokens, 64, args.repeats),
                bench_cosine(impl, matrix, query, args.repeats),
                bench_bm25(impl, n_docs, postings, len_norm, args.repeats),
            )
        )

    print(f"{'impl':<8} {'embed 200k tok':>16} {'cosine 20k x 64':>16} {'bm25 50k docs':>16}")
    for name, t_embed, t_cos, t_bm25 in rows:
        print(f"{name:<8} {t_embed * 1e3:>13.2f} ms {t_cos * 1e3:>13.2f} ms {t_bm25 * 1e3:>13.2f} ms")
    if len(rows) == 2:
        print(
            f"{'speedup':<8} "
            f"{rows[0][1] / rows[1][1]:>14.2f}x {rows[0][2] / rows[1][2]:>14.2f}x "
            f"{rows[0][3] / rows[1][3]:>14.2f}x"
        )
    if native is None:
        print("(native kernels not built; rerun after `pip install -e .`)")


if __name__ == "__main__":
    main()
