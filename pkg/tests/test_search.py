"""Retrieval oracles: BM25 arithmetic, exact cosine vs brute force, graph
expansion fixtures, RRF worked example, filters, tool descriptors."""

from __future__ import annotations

import math

import numpy as np
import pytest

from iodeep.errors import QueryError
from iodeep.hetero import build_index
from iodeep.pids import Level
from iodeep.refine import EmbeddingRecord, KnowledgeGraph
from iodeep.refs import chunk_ref, node_ref, object_ref
from iodeep.search import (
    Filters,
    RetrievalQuery,
    RetrievedItem,
    Retriever,
    SearchIndex,
    apply_filters,
    fuse_rrf,
    list_tools,
)
from iodeep.pipeline import ingest_dir
from iodeep.store import ObjectStore
from iodeep.textproc import content_tokens
from tests.conftest import write_docs

BM25_K1, BM25_B = 1.2, 0.75


def stub_item(key: str, score: float = 1.0, **meta) -> RetrievedItem:
    base = {
        "type": "document",
        "source": "fixture://x",
        "timestamp": "2024-01-01T00:00:00+00:00",
        "domain": "x",
    }
    base.update(meta)
    ref = object_ref(f"iod:x/{key * 16}"[:22] if False else f"iod:x/{(key * 16)[:16]}")
    return RetrievedItem(ref=ref, score=score, snippet=key, metadata=base, provenance=(ref,))


class StubGateway:
    """Embedding-only gateway returning preset unit vectors."""

    def __init__(self, query_vectors: dict[str, np.ndarray], dim: int = 64):
        from iodeep.gateway import GatewayConfig

        self.config = GatewayConfig(embed_dim=dim)
        self.query_vectors = query_vectors

    def embed(self, texts):
        return [np.asarray(self.query_vectors[t], dtype=np.float32) for t in texts]


class TestKeywordSearch:
    def test_bm25_hand_computed(self, ti_corpus):
        # 'oxidation'-free query: use a term unique to the granite doc
        retriever = ti_corpus.retriever
        docs = retriever.index.tier("chunk")
        query = RetrievalQuery(text="plutonic", tier="chunk", strategy="keyword")
        items = retriever.keyword_search(query)
        assert len(items) == 1
        # independent BM25 oracle with the stated constants
        n = len(docs.refs)
        texts = docs.texts
        lens = [len(content_tokens(t)) for t in texts]
        avg = sum(lens) / len(lens)
        df = sum(1 for t in texts if "plutonic" in content_tokens(t))
        idx = next(i for i, t in enumerate(texts) if "plutonic" in content_tokens(t))
        tf = content_tokens(texts[idx]).count("plutonic")
        idf = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
        expected = idf * tf * (BM25_K1 + 1) / (tf + BM25_K1 * (1 - BM25_B + BM25_B * lens[idx] / avg))
        assert items[0].score == pytest.approx(expected, abs=1e-9)
        assert items[0].ref == docs.refs[idx]

    def test_term_in_one_doc_ranks_it_first(self, ti_corpus):
        items = ti_corpus.retriever.keyword_search(
            RetrievalQuery(text="granite density", tier="object", strategy="keyword")
        )
        assert items[0].metadata["domain"] == "geology"

    def test_stopword_only_query_empty(self, ti_corpus):
        items = ti_corpus.retriever.keyword_search(
            RetrievalQuery(text="the of and", tier="chunk", strategy="keyword")
        )
        assert items == []

    def test_empty_query_rejected(self, ti_corpus):
        with pytest.raises(QueryError):
            ti_corpus.retriever.keyword_search(
                RetrievalQuery(text="   ", tier="chunk", strategy="keyword")
            )

    def test_domain_filter_is_hard(self, ti_corpus):
        query = RetrievalQuery(
            text="notes", tier="object", strategy="keyword", filters=Filters(domain="pharma")
        )
        for item in ti_corpus.retriever.keyword_search(query):
            assert item.metadata["domain"] == "pharma"

    def test_repeat_queries_identical(self, ti_corpus):
        query = RetrievalQuery(text="Ti3SiC2 melting", tier="chunk", strategy="keyword")
        a = ti_corpus.retriever.keyword_search(query)
        b = ti_corpus.retriever.keyword_search(query)
        assert [(i.ref, i.score) for i in a] == [(i.ref, i.score) for i in b]


def build_vector_fixture(tmp_path, n=200, dim=64, seed=99):
    """n one-chunk docs, each chunk carrying a seeded random unit vector."""
    rng = np.random.default_rng(seed)
    docs = {f"d{i:03d}.txt": f"document number {i}" for i in range(n)}
    write_docs(tmp_path / "docs", docs)
    store = ObjectStore(tmp_path / "data")
    from iodeep.config import Config

    ingest_dir(store, tmp_path / "docs", "vex", Config())
    chunk_refs = sorted(
        (chunk_ref(o.pid) for o in store.all_objects() if o.pid.level is Level.L2),
        key=lambda r: r.sort_key(),
    )
    assert len(chunk_refs) == n
    matrix = rng.standard_normal((n, dim))
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    matrix = matrix.astype(np.float32)
    records = [
        EmbeddingRecord(owner=ref, vector=tuple(float(x) for x in matrix[i]), embedder_id="seeded")
        for i, ref in enumerate(chunk_refs)
    ]
    graph = build_index(store, None, KnowledgeGraph.empty(), [], records)
    queries = rng.standard_normal((50, dim))
    queries /= np.linalg.norm(queries, axis=1, keepdims=True)
    queries = queries.astype(np.float32)
    query_vectors = {f"q{i}": queries[i] for i in range(50)}
    retriever = Retriever(SearchIndex(graph), StubGateway(query_vectors, dim))
    return retriever, chunk_refs, matrix, query_vectors


def brute_force_topk(matrix: np.ndarray, refs, query: np.ndarray, k: int):
    """Oracle: python-loop cosine, sort by (-score, ref order)."""
    scored = []
    for i in range(matrix.shape[0]):
        s = sum(float(matrix[i, j]) * float(query[j]) for j in range(matrix.shape[1]))
        scored.append((s, refs[i]))
    scored.sort(key=lambda pair: (-pair[0], pair[1].sort_key()))
    return scored[:k]


class TestVectorSearch:
    def test_top10_equals_brute_force_for_50_queries(self, tmp_path):
        retriever, refs, matrix, query_vectors = build_vector_fixture(tmp_path)
        for name, qvec in query_vectors.items():
            items = retriever.vector_search(
                RetrievalQuery(text=name, tier="chunk", strategy="vector", top_k=10)
            )
            oracle = brute_force_topk(matrix, refs, qvec, 10)
            assert [it.ref for it in items] == [ref for _, ref in oracle], name
            for item, (score, _) in zip(items, oracle):
                assert item.score == pytest.approx(score, abs=1e-9)

    def test_identical_text_scores_one(self, ti_corpus, gateway):
        chunk_obj = next(
            o for o in ti_corpus.store.all_objects() if o.pid.level is Level.L2
        )
        text = ti_corpus.store.object_text(chunk_obj)
        items = ti_corpus.retriever.vector_search(
            RetrievalQuery(text=text, tier="chunk", strategy="vector", top_k=3)
        )
        assert items[0].ref == chunk_ref(chunk_obj.pid)
        assert items[0].score == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_vectors_score_zero(self, tmp_path):
        dim = 8
        vec_a = np.zeros(dim, dtype=np.float32); vec_a[0] = 1.0
        vec_b = np.zeros(dim, dtype=np.float32); vec_b[1] = 1.0
        write_docs(tmp_path / "docs", {"a.txt": "aaa"})
        store = ObjectStore(tmp_path / "data")
        from iodeep.config import Config

        ingest_dir(store, tmp_path / "docs", "orth", Config())
        ref = next(chunk_ref(o.pid) for o in store.all_objects() if o.pid.level is Level.L2)
        record = EmbeddingRecord(owner=ref, vector=tuple(float(x) for x in vec_a), embedder_id="s")
        graph = build_index(store, None, KnowledgeGraph.empty(), [], [record])
        retriever = Retriever(SearchIndex(graph), StubGateway({"q": vec_b}, dim))
        items = retriever.vector_search(RetrievalQuery(text="q", tier="chunk", strategy="vector"))
        assert items[0].score == pytest.approx(0.0, abs=1e-9)

    def test_dimension_mismatch_rejected(self, tmp_path):
        retriever, *_ = build_vector_fixture(tmp_path, n=5)
        bad = StubGateway({"q": np.ones(16, dtype=np.float32) / 4.0}, 16)
        retriever.gateway = bad
        with pytest.raises(QueryError, match="dimension"):
            retriever.vector_search(RetrievalQuery(text="q", tier="chunk", strategy="vector"))

    def test_no_embeddings_for_tier_rejected(self, tmp_path):
        retriever, *_ = build_vector_fixture(tmp_path, n=5)
        with pytest.raises(QueryError, match="no embeddings"):
            retriever.vector_search(RetrievalQuery(text="q0", tier="fine", strategy="vector"))


class TestGraphSearch:
    def test_seed_above_one_hop_neighbor(self, ti_corpus):
        items = ti_corpus.retriever.graph_search(
            RetrievalQuery(text="Ti3SiC2", tier="fine", strategy="graph")
        )
        refs = [it.ref for it in items]
        assert node_ref("ti3sic2") in refs
        assert node_ref("max phase") in refs
        assert refs.index(node_ref("ti3sic2")) < refs.index(node_ref("max phase"))
        by_ref = {it.ref: it.score for it in items}
        assert by_ref[node_ref("ti3sic2")] == pytest.approx(2 * by_ref[node_ref("max phase")])

    def test_zero_hops_returns_seeds_only(self, ti_corpus):
        items = ti_corpus.retriever.graph_search(
            RetrievalQuery(text="Ti3SiC2", tier="fine", strategy="graph"), max_hops=0
        )
        assert node_ref("ti3sic2") in [it.ref for it in items]
        assert node_ref("max phase") not in [it.ref for it in items]

    def test_bridge_entity_reaches_both_documents(self, tmp_path, gateway, config):
        docs = {
            "one.txt": "Alphine is a rare alloy. Alphine bonds strongly with Bridgium.",
            "two.txt": "Bridgium is a dense metal. Bridgium ore ships from the north quarry.",
        }
        write_docs(tmp_path / "docs", docs)
        store = ObjectStore(tmp_path / "data")
        ingest_dir(store, tmp_path / "docs", "alloys", config)
        from iodeep.pipeline import refine_and_index

        corpus = refine_and_index(store, gateway, config)
        items = corpus.retriever.graph_search(
            RetrievalQuery(text="Alphine", tier="object", strategy="graph", top_k=5)
        )
        domains_pids = {it.ref.key for it in items}
        l1 = {str(o.pid) for o in store.all_objects() if o.pid.level is Level.L1}
        assert domains_pids == l1  # both documents reachable through the bridge

    def test_no_match_returns_empty(self, ti_corpus):
        assert (
            ti_corpus.retriever.graph_search(
                RetrievalQuery(text="zzzunknown", tier="fine", strategy="graph")
            )
            == []
        )


class TestRrf:
    def test_worked_example_to_1e9(self):
        a, b, c = stub_item("a"), stub_item("b"), stub_item("c")
        fused = fuse_rrf([[a, b, c], [a, c], []], top_k=10)
        scores = {it.snippet: it.score for it in fused}
        assert scores["a"] == pytest.approx(1 / 61 + 1 / 61, abs=1e-9)
        assert scores["c"] == pytest.approx(1 / 63 + 1 / 62, abs=1e-9)
        assert scores["b"] == pytest.approx(1 / 62, abs=1e-9)
        assert [it.snippet for it in fused] == ["a", "c", "b"]

    def test_absent_everywhere_absent_from_fusion(self):
        fused = fuse_rrf([[stub_item("a")], [stub_item("a")]], top_k=10)
        assert {it.snippet for it in fused} == {"a"}

    def test_single_list_preserves_order(self):
        items = [stub_item(k, score=1.0 - i / 10) for i, k in enumerate("abcd")]
        fused = fuse_rrf([items, [], []], top_k=10)
        assert [it.snippet for it in fused] == ["a", "b", "c", "d"]

    def test_score_bounds(self):
        items = [stub_item(k) for k in "abc"]
        fused = fuse_rrf([items, items, items], top_k=10)
        for item in fused:
            assert 0.0 < item.score <= 3 / 61 + 1e-12

    def test_hybrid_survives_vector_failure(self, ti_corpus):
        # gateway=None disables vector search; keyword+graph still fuse
        retriever = Retriever(ti_corpus.retriever.index, gateway=None)
        items = retriever.hybrid_search(
            RetrievalQuery(text="Ti3SiC2 melting point", tier="chunk", strategy="hybrid")
        )
        assert items

    def test_hybrid_all_fail_propagates(self, ti_corpus):
        retriever = Retriever(ti_corpus.retriever.index, gateway=None)
        with pytest.raises(QueryError):
            retriever.hybrid_search(RetrievalQuery(text="  ", tier="chunk", strategy="hybrid"))


class TestFilters:
    def test_before_removes_later_items(self):
        items = [
            stub_item("a", timestamp="2024-01-01T00:00:00+00:00"),
            stub_item("b", timestamp="2025-01-01T00:00:00+00:00"),
        ]
        kept = apply_filters(items, Filters(before="2024-06-01T00:00:00+00:00"))
        assert [i.snippet for i in kept] == ["a"]

    def test_after_and_window(self):
        items = [
            stub_item("a", timestamp="2024-01-01T00:00:00+00:00"),
            stub_item("b", timestamp="2024-06-01T00:00:00+00:00"),
            stub_item("c", timestamp="2024-12-01T00:00:00+00:00"),
        ]
        kept = apply_filters(
            items,
            Filters(after="2024-03-01T00:00:00+00:00", before="2024-09-01T00:00:00+00:00"),
        )
        assert [i.snippet for i in kept] == ["b"]

    def test_empty_filters_identity(self):
        items = [stub_item("a"), stub_item("b")]
        assert apply_filters(items, Filters()) == items

    def test_allowlist(self):
        items = [
            stub_item("a", source="https://arxiv.org/abs/1"),
            stub_item("b", source="https://blog.example/post"),
        ]
        kept = apply_filters(items, Filters(source_allowlist=frozenset({"arxiv.org"})))
        assert [i.snippet for i in kept] == ["a"]

    def test_kinds(self):
        items = [stub_item("a", type="document"), stub_item("b", type="image")]
        kept = apply_filters(items, Filters(kinds=frozenset({"image"})))
        assert [i.snippet for i in kept] == ["b"]

    def test_invalid_window_rejected(self):
        with pytest.raises(QueryError):
            Filters(after="2025-01-01T00:00:00+00:00", before="2024-01-01T00:00:00+00:00")


class TestTools:
    def test_exactly_five_descriptors(self):
        tools = list_tools()
        assert [t["name"] for t in tools] == [
            "iod.search_objects",
            "iod.search_chunks",
            "iod.search_fine",
            "iod.get_object",
            "iod.graph_neighbors",
        ]

    def test_every_schema_declares_top_k_default_10(self):
        for tool in list_tools():
            prop = tool["input_schema"]["properties"]["top_k"]
            assert prop["default"] == 10

    def test_constructed_call_validates(self):
        import jsonschema

        for tool in list_tools():
            schema = tool["input_schema"]
            args = {}
            for name in schema.get("required", ()):  # fill required fields minimally
                if name == "text":
                    args[name] = "query"
                elif name == "pid":
                    args[name] = "iod:law/0123456789abcdef"
                elif name == "ref":
                    args[name] = "node:ti3sic2"
            jsonschema.validate(args, schema)  # must not raise

    def test_missing_required_field_fails_validation(self):
        import jsonschema

        schema = list_tools()[0]["input_schema"]
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate({"top_k": 3}, schema)


def test_rrf_item_in_more_lists_never_ranks_below_same_rank_singleton():
    # x sits at rank r in two lists, y at rank r in one list: x must not rank below y
    for r in range(1, 6):
        pad_x = [stub_item(f"p{i}") for i in range(r - 1)]
        pad_y = [stub_item(f"q{i}") for i in range(r - 1)]
        x, y = stub_item("x"), stub_item("y")
        fused = fuse_rrf([[*pad_x, x], [*pad_x, x], [*pad_y, y]], top_k=50)
        order = [it.snippet for it in fused]
        assert order.index("x") < order.index("y")
