"""Multi-granularity retrieval: three tiers (object / chunk / fine) crossed
with four strategies (keyword / vector / graph / hybrid).

Scoring: BM25 (k1=1.2, b=0.75) for keywords, exact cosine over unit vectors
for similarity, seed-overlap decayed by hop distance for graph expansion,
and reciprocal-rank fusion (k=60) for hybrid. Ties always break on the
GraphRef total order, so repeated queries return identical lists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Callable, Optional, Sequence

import numpy as np

from iodeep import kernels
from iodeep.errors import QueryError
from iodeep.hetero import HeteroGraph
from iodeep.pids import Level
from iodeep.refine import node_key
from iodeep.refs import GraphRef, chunk_ref, edge_ref, fact_ref, node_ref, object_ref, ref_pid
from iodeep.textproc import content_tokens, tokenize

TIERS = ("object", "chunk", "fine")
STRATEGIES = ("keyword", "vector", "graph", "hybrid")

BM25_K1 = 1.2
BM25_B = 0.75
RRF_K = 60
SNIPPET_LIMIT = 500
DEFAULT_TOP_K = 10
DEFAULT_MAX_HOPS = 2


@dataclass(frozen=True)
class Filters:
    domain: Optional[str] = None
    after: Optional[str] = None
    before: Optional[str] = None
    kinds: Optional[frozenset[str]] = None
    source_allowlist: Optional[frozenset[str]] = None

    def __post_init__(self):
        if self.after and self.before:
            if datetime.fromisoformat(self.after) > datetime.fromisoformat(self.before):
                raise QueryError("filter window requires after <= before")

    def active(self) -> bool:
        return any(
            v is not None for v in (self.domain, self.after, self.before, self.kinds, self.source_allowlist)
        )


@dataclass(frozen=True)
class RetrievalQuery:
    text: str
    tier: str = "chunk"
    strategy: str = "hybrid"
    filters: Filters = Filters()
    top_k: int = DEFAULT_TOP_K

    def __post_init__(self):
        if self.tier not in TIERS:
            raise QueryError(f"unknown tier {self.tier!r}")
        if self.strategy not in STRATEGIES:
            raise QueryError(f"unknown strategy {self.strategy!r}")
        if self.top_k < 1:
            raise QueryError("top_k must be >= 1")


@dataclass(frozen=True)
class RetrievedItem:
    ref: GraphRef
    score: float
    snippet: str
    metadata: dict
    provenance: tuple[GraphRef, ...]

    def __post_init__(self):
        if not self.provenance:
            raise ValueError("provenance must be non-empty")


def _sort_items(items: list[RetrievedItem]) -> list[RetrievedItem]:
    return sorted(items, key=lambda it: (-it.score, it.ref.sort_key()))


# ---------------------------------------------------------------------------
# Tier document collections
# ---------------------------------------------------------------------------

@dataclass
class _TierDocs:
    refs: list[GraphRef]
    texts: list[str]
    postings: dict[str, list[tuple[int, int]]]
    doc_lens: np.ndarray  # float64 token counts
    avg_len: float
    index_of: dict[GraphRef, int]


def _build_tier(refs: list[GraphRef], texts: list[str]) -> _TierDocs:
    order = sorted(range(len(refs)), key=lambda i: refs[i].sort_key())
    refs = [refs[i] for i in order]
    texts = [texts[i] for i in order]
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lens = np.zeros(len(refs), dtype=np.float64)
    for idx, text in enumerate(texts):
        tokens = content_tokens(text)
        doc_lens[idx] = len(tokens)
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for token, tf in counts.items():
            postings.setdefault(token, []).append((idx, tf))
    avg_len = float(doc_lens.mean()) if len(refs) else 0.0
    return _TierDocs(
        refs=refs,
        texts=texts,
        postings=postings,
        doc_lens=doc_lens,
        avg_len=avg_len or 1.0,
        index_of={ref: i for i, ref in enumerate(refs)},
    )


class SearchIndex:
    """Immutable read structures for one built HeteroGraph."""

    def __init__(self, graph: HeteroGraph):
        self.graph = graph
        self._tiers: dict[str, _TierDocs] = {}
        self._matrices: dict[str, tuple[list[GraphRef], np.ndarray]] = {}
        self._build()

    def _object_text(self, obj) -> str:
        parts = [obj.explicit_meta.title]
        if obj.enriched_meta:
            parts.append(obj.enriched_meta.summary)
            parts.extend(sorted(obj.enriched_meta.keywords))
            parts.extend(obj.enriched_meta.hypothetical_questions)
            if obj.enriched_meta.multimodal_description:
                parts.append(obj.enriched_meta.multimodal_description)
        return "\n".join(p for p in parts if p)

    def _build(self):
        graph = self.graph
        object_refs, object_texts = [], []
        chunk_refs, chunk_texts = [], []
        for obj in graph.registry.all_objects():
            if obj.pid.level is Level.L1:
                object_refs.append(object_ref(obj.pid))
                object_texts.append(self._object_text(obj))
            else:
                cref = chunk_ref(obj.pid)
                chunk_refs.append(cref)
                chunk_texts.append(graph.registry.object_text(obj))
        fine_refs, fine_texts = [], []
        for key in sorted(graph.kg.nodes):
            node = graph.kg.nodes[key]
            fine_refs.append(node_ref(key))
            fine_texts.append(
                " ".join([node.canonical_name, *sorted(node.keywords), node.description])
            )
        for fact_id in sorted(graph.facts):
            fine_refs.append(fact_ref(fact_id))
            fine_texts.append(graph.facts[fact_id].rendered)
        self._tiers["object"] = _build_tier(object_refs, object_texts)
        self._tiers["chunk"] = _build_tier(chunk_refs, chunk_texts)
        self._tiers["fine"] = _build_tier(fine_refs, fine_texts)

        by_tag: dict[str, list] = {"object": [], "chunk": [], "fine": []}
        for owner, record in graph.embeddings.items():
            tier = {"object": "object", "chunk": "chunk"}.get(owner.tag, "fine")
            by_tag[tier].append((owner, record))
        for tier, pairs in by_tag.items():
            pairs.sort(key=lambda p: p[0].sort_key())
            refs = [p[0] for p in pairs]
            matrix = (
                np.asarray([p[1].vector for p in pairs], dtype=np.float32)
                if pairs
                else np.zeros((0, 0), dtype=np.float32)
            )
            self._matrices[tier] = (refs, matrix)

    def tier(self, name: str) -> _TierDocs:
        return self._tiers[name]

    def matrix(self, name: str) -> tuple[list[GraphRef], np.ndarray]:
        return self._matrices[name]

    def text_for(self, ref: GraphRef) -> str:
        for tier in TIERS:
            docs = self._tiers[tier]
            idx = docs.index_of.get(ref)
            if idx is not None:
                return docs.texts[idx]
        return ""


# ---------------------------------------------------------------------------
# Item construction and filtering
# ---------------------------------------------------------------------------

def _snippet(text: str, query_tokens: Sequence[str]) -> str:
    if len(text) <= SNIPPET_LIMIT:
        return text
    lowered = text.lower()
    pos = -1
    for token in query_tokens:
        hit = lowered.find(token)
        if hit != -1 and (pos == -1 or hit < pos):
            pos = hit
    start = max(0, pos - 100) if pos != -1 else 0
    return text[start : start + SNIPPET_LIMIT]


def _provenance(graph: HeteroGraph, ref: GraphRef) -> tuple[GraphRef, ...]:
    """Chain from the ref through derivation/containment to an L1 object ref."""
    if ref.tag == "object":
        return (ref,)
    if ref.tag == "chunk":
        parent = graph.containment_in.get(ref)
        if parent is None:
            raise QueryError(f"chunk {ref} has no containing object")
        return (ref, parent)
    sources = graph.derivation_in.get(ref, ())
    if not sources:
        raise QueryError(f"ref {ref} has no deriving chunk")
    first = sources[0]
    return (ref, first, graph.containment_in[first])


def _item(
    graph: HeteroGraph,
    ref: GraphRef,
    score: float,
    text: str,
    query_tokens: Sequence[str],
) -> RetrievedItem:
    prov = _provenance(graph, ref)
    obj = graph.registry.get(ref_pid(prov[-1]))
    return RetrievedItem(
        ref=ref,
        score=float(score),
        snippet=_snippet(text, query_tokens),
        metadata={
            "type": obj.kind,
            "source": obj.explicit_meta.source,
            "timestamp": obj.explicit_meta.timestamp,
            "domain": obj.explicit_meta.domain,
        },
        provenance=prov,
    )


def apply_filters(items: Sequence[RetrievedItem], filters: Filters) -> list[RetrievedItem]:
    """Hard removal of items violating the trust filters; order preserved."""
    if not filters.active():
        return list(items)
    out = []
    for item in items:
        meta = item.metadata
        if filters.domain is not None and meta.get("domain") != filters.domain:
            continue
        if filters.kinds is not None and meta.get("type") not in filters.kinds:
            continue
        ts = meta.get("timestamp")
        if filters.after is not None and (not ts or ts < filters.after):
            continue
        if filters.before is not None and (not ts or ts > filters.before):
            continue
        if filters.source_allowlist is not None:
            source = meta.get("source", "")
            if not any(allowed in source for allowed in filters.source_allowlist):
                continue
        out.append(item)
    return out


# ---------------------------------------------------------------------------
# Retriever
# ---------------------------------------------------------------------------

class Retriever:
    def __init__(self, index: SearchIndex, gateway=None, max_hops: int = DEFAULT_MAX_HOPS):
        self.index = index
        self.graph = index.graph
        self.gateway = gateway
        self.max_hops = max_hops

    # -- keyword ------------------------------------------------------------

    def keyword_search(self, query: RetrievalQuery) -> list[RetrievedItem]:
        """BM25 over the tier's text fields."""
        if not query.text.strip():
            raise QueryError("empty query text")
        docs = self.index.tier(query.tier)
        terms = sorted(set(content_tokens(query.text)))
        if not terms or not docs.refs:
            return []
        n = len(docs.refs)
        scores = np.zeros(n, dtype=np.float64)
        len_norm = docs.doc_lens / docs.avg_len
        for term in terms:
            postings = docs.postings.get(term)
            if not postings:
                continue
            df = len(postings)
            idf = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
            doc_ids = np.asarray([p[0] for p in postings], dtype=np.int32)
            tfs = np.asarray([p[1] for p in postings], dtype=np.float32)
            kernels.bm25_accumulate(scores, doc_ids, tfs, idf, BM25_K1, BM25_B, len_norm)
        query_tokens = [t for t in tokenize(query.text)]
        items = [
            _item(self.graph, docs.refs[i], scores[i], docs.texts[i], query_tokens)
            for i in np.nonzero(scores)[0]
        ]
        return apply_filters(_sort_items(items), query.filters)[: query.top_k]

    # -- vector ---------------------------------------------------------------

    def vector_search(self, query: RetrievalQuery) -> list[RetrievedItem]:
        """Exact cosine ranking against the tier's stored unit vectors."""
        if not query.text.strip():
            raise QueryError("empty query text")
        if self.gateway is None:
            raise QueryError("vector search requires a gateway for query embedding")
        refs, matrix = self.index.matrix(query.tier)
        if not refs:
            raise QueryError(f"no embeddings for tier {query.tier!r}")
        query_vec = self.gateway.embed([query.text])[0]
        if matrix.shape[1] != len(query_vec):
            raise QueryError(
                f"dimension mismatch: index {matrix.shape[1]} vs query {len(query_vec)}"
            )
        scores = kernels.cosine_scores(matrix, np.asarray(query_vec, dtype=np.float32))
        order = kernels.topk_desc(scores, len(refs))
        query_tokens = [t for t in tokenize(query.text)]
        items = [
            _item(
                self.graph,
                refs[i],
                scores[i],
                self.index.text_for(refs[i]),
                query_tokens,
            )
            for i in order
        ]
        return apply_filters(items, query.filters)[: query.top_k]

    # -- graph ------------------------------------------------------------------

    def _seed_nodes(self, query_text: str) -> dict[str, float]:
        q_tokens = set(content_tokens(query_text)) or set(tokenize(query_text))
        if not q_tokens:
            return {}
        seeds: dict[str, float] = {}
        for key in sorted(self.graph.kg.nodes):
            node = self.graph.kg.nodes[key]
            node_tokens = set(tokenize(node.canonical_name))
            for kw in node.keywords:
                node_tokens.update(tokenize(kw))
            overlap = len(q_tokens & node_tokens) / len(q_tokens)
            if overlap > 0:
                seeds[key] = overlap
        return seeds

    def _expand(self, seeds: dict[str, float], max_hops: int) -> dict[str, float]:
        """Best score per node: seed_overlap / (1 + hop_distance)."""
        best: dict[str, float] = {}
        for seed_key in sorted(seeds):
            frontier = {seed_key}
            visited = {seed_key}
            for hops in range(max_hops + 1):
                score = seeds[seed_key] / (1 + hops)
                for key in sorted(frontier):
                    if score > best.get(key, 0.0):
                        best[key] = score
                if hops == max_hops:
                    break
                next_frontier: set[str] = set()
                for key in frontier:
                    for neighbor, _edge in self.graph.kg.neighbors(key):
                        if neighbor not in visited:
                            visited.add(neighbor)
                            next_frontier.add(neighbor)
                frontier = next_frontier
                if not frontier:
                    break
        return best

    def graph_search(self, query: RetrievalQuery, max_hops: int | None = None) -> list[RetrievedItem]:
        """Seed on name/keyword matches, expand over semantic links, then map
        results down to the requested tier."""
        if not query.text.strip():
            raise QueryError("empty query text")
        hops = self.max_hops if max_hops is None else max_hops
        seeds = self._seed_nodes(query.text)
        node_scores = self._expand(seeds, hops) if seeds else {}
        if not node_scores:
            return []
        query_tokens = [t for t in tokenize(query.text)]

        fine: dict[GraphRef, float] = {}
        for key, score in node_scores.items():
            fine[node_ref(key)] = score
        for (a, b), _edge in sorted(self.graph.kg.edges.items()):
            if a in node_scores and b in node_scores:
                fine[edge_ref(a, b)] = (node_scores[a] + node_scores[b]) / 2.0
        for fact_id in sorted(self.graph.facts):
            subject_key = node_key(self.graph.facts[fact_id].subject)
            if subject_key in node_scores:
                fine[fact_ref(fact_id)] = node_scores[subject_key]

        if query.tier == "fine":
            scored = fine
        else:
            scored = {}
            for ref in sorted(fine, key=lambda r: r.sort_key()):
                score = fine[ref]
                if ref.tag == "node" or ref.tag == "edge" or ref.tag == "fact":
                    sources = self.graph.derivation_in.get(ref, ())
                else:
                    sources = ()
                if query.tier == "chunk":
                    targets = sources
                else:
                    targets = tuple(
                        object_ref(p) for p in self.graph.resolve_to_objects([ref])
                    )
                for target in targets:
                    if score > scored.get(target, 0.0):
                        scored[target] = score

        items = []
        for ref in sorted(scored, key=lambda r: r.sort_key()):
            items.append(
                _item(self.graph, ref, scored[ref], self.index.text_for(ref), query_tokens)
            )
        return apply_filters(_sort_items(items), query.filters)[: query.top_k]

    # -- hybrid ------------------------------------------------------------------

    def hybrid_search(self, query: RetrievalQuery) -> list[RetrievedItem]:
        """Reciprocal-rank fusion (k=60) of the keyword, vector, and graph lists."""
        lists: list[list[RetrievedItem]] = []
        errors: list[Exception] = []
        for runner in (self.keyword_search, self.vector_search, self.graph_search):
            try:
                lists.append(runner(replace(query, strategy=_strategy_of(runner))))
            except Exception as exc:  # noqa: BLE001 - sub-strategy failures are fused away
                errors.append(exc)
                lists.append([])
        if len(errors) == 3:
            raise QueryError(f"all hybrid sub-strategies failed: {errors[0]}")
        return fuse_rrf(lists, top_k=query.top_k)

    # -- dispatch ------------------------------------------------------------------

    def search(self, query: RetrievalQuery) -> list[RetrievedItem]:
        if query.strategy == "keyword":
            return self.keyword_search(query)
        if query.strategy == "vector":
            return self.vector_search(query)
        if query.strategy == "graph":
            return self.graph_search(query)
        return self.hybrid_search(query)


def _strategy_of(bound_method: Callable) -> str:
    return {
        "keyword_search": "keyword",
        "vector_search": "vector",
        "graph_search": "graph",
    }[bound_method.__name__]


def fuse_rrf(lists: Sequence[Sequence[RetrievedItem]], top_k: int, k: int = RRF_K) -> list[RetrievedItem]:
    """score(item) = sum over lists of 1/(k + rank), rank starting at 1."""
    scores: dict[GraphRef, float] = {}
    carriers: dict[GraphRef, RetrievedItem] = {}
    for ranked in lists:
        for rank, item in enumerate(ranked, start=1):
            scores[item.ref] = scores.get(item.ref, 0.0) + 1.0 / (k + rank)
            carriers.setdefault(item.ref, item)
    fused = [
        RetrievedItem(
            ref=ref,
            score=scores[ref],
            snippet=carriers[ref].snippet,
            metadata=carriers[ref].metadata,
            provenance=carriers[ref].provenance,
        )
        for ref in scores
    ]
    return _sort_items(fused)[:top_k]


# ---------------------------------------------------------------------------
# Tool descriptors
# ---------------------------------------------------------------------------

def _query_schema(description: str) -> dict:
    return {
        "type": "object",
        "properties": {
            "text": {"type": "string", "description": "query text"},
            "strategy": {
                "type": "string",
                "enum": list(STRATEGIES),
                "default": "hybrid",
            },
            "filters": {
                "type": "object",
                "properties": {
                    "domain": {"type": "string"},
                    "after": {"type": "string", "description": "ISO-8601 lower bound"},
                    "before": {"type": "string", "description": "ISO-8601 upper bound"},
                    "kinds": {"type": "array", "items": {"type": "string"}},
                    "source_allowlist": {"type": "array", "items": {"type": "string"}},
                },
                "additionalProperties": False,
            },
            "top_k": {"type": "integer", "minimum": 1, "default": DEFAULT_TOP_K},
        },
        "required": ["text"],
        "additionalProperties": False,
        "description": description,
    }


def list_tools() -> list[dict]:
    """Descriptors for the five retrieval tools exposed over the tool server."""
    return [
        {
            "name": "iod.search_objects",
            "description": "Search digital objects (document tier) and return scored pids.",
            "input_schema": _query_schema("object-tier retrieval query"),
        },
        {
            "name": "iod.search_chunks",
            "description": "Search content chunks (L2 objects) and return scored passages.",
            "input_schema": _query_schema("chunk-tier retrieval query"),
        },
        {
            "name": "iod.search_fine",
            "description": "Search the refinement layer: atomic facts, KG nodes and edges.",
            "input_schema": _query_schema("fine-tier retrieval query"),
        },
        {
            "name": "iod.get_object",
            "description": "Fetch one digital object record by pid.",
            "input_schema": {
                "type": "object",
                "properties": {
                    "pid": {"type": "string", "description": "canonical pid text"},
                    "top_k": {"type": "integer", "minimum": 1, "default": DEFAULT_TOP_K},
                },
                "required": ["pid"],
                "additionalProperties": False,
            },
        },
        {
            "name": "iod.graph_neighbors",
            "description": "List linked refs of a graph ref over one link kind.",
            "input_schema": {
                "type": "object",
                "properties": {
                    "ref": {"type": "string", "description": "ref text, e.g. node:ti3sic2"},
                    "link_kind": {
                        "type": "string",
                        "enum": ["containment", "derivation", "semantic"],
                        "default": "semantic",
                    },
                    "direction": {
                        "type": "string",
                        "enum": ["out", "in", "both"],
                        "default": "both",
                    },
                    "top_k": {"type": "integer", "minimum": 1, "default": DEFAULT_TOP_K},
                },
                "required": ["ref"],
                "additionalProperties": False,
            },
        },
    ]


def item_to_record(item: RetrievedItem) -> dict:
    return {
        "ref": str(item.ref),
        "score": item.score,
        "snippet": item.snippet,
        "metadata": dict(item.metadata),
        "provenance": [str(r) for r in item.provenance],
    }
