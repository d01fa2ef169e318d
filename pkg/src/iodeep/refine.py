"""Knowledge refinement: embeddings, per-passage graph extraction, graph
merging, and atomic facts.

Per-chunk extraction may run in any order; ``merge_graph`` is a fold over
canonically sorted inputs, so parallel schedules cannot change the result.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from iodeep.errors import GatewayError
from iodeep.gateway import GatewayRequest
from iodeep.ingest import Chunk
from iodeep.refs import GraphRef, chunk_ref, parse_ref
from iodeep.textproc import truncate_utf8

DESCRIPTION_LIMIT = 400
EMBED_MAGIC = b"IODV"
EMBED_VERSION = 1


def node_key(name: str) -> str:
    """Case-insensitive canonical key for a node name."""
    return " ".join(name.split()).lower().replace("|", "/")


@dataclass(frozen=True)
class KgNode:
    canonical_name: str
    entity_type: str
    keywords: frozenset[str]
    description: str
    source_refs: frozenset[GraphRef]
    mention_count: int = 1

    def __post_init__(self):
        if not self.canonical_name.strip():
            raise ValueError("node canonical_name must be non-empty")
        if not self.source_refs:
            raise ValueError("node must carry at least one source ref")
        if self.mention_count <= 0:
            raise ValueError("mention_count must be positive")

    @property
    def key(self) -> str:
        return node_key(self.canonical_name)


@dataclass(frozen=True)
class KgEdge:
    endpoints: tuple[str, str]  # sorted node keys
    keywords: frozenset[str]
    description: str
    source_refs: frozenset[GraphRef]
    weight: int = 1

    def __post_init__(self):
        if not self.keywords:
            raise ValueError("edge keywords must be non-empty")
        if not self.source_refs:
            raise ValueError("edge must carry at least one source ref")
        if self.weight <= 0:
            raise ValueError("edge weight must be positive")
        if tuple(sorted(self.endpoints)) != tuple(self.endpoints) or len(set(self.endpoints)) != 2:
            raise ValueError("endpoints must be a sorted pair of distinct node keys")


@dataclass(frozen=True)
class AtomicFact:
    subject: str
    attribute: str
    value: str
    source_ref: GraphRef
    unit: str | None = None
    confidence: float = 1.0

    def __post_init__(self):
        if not self.subject or not self.attribute:
            raise ValueError("fact subject and attribute must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")

    @property
    def rendered(self) -> str:
        tail = f" {self.unit}" if self.unit else ""
        return f"{self.subject}: {self.attribute} = {self.value}{tail}"

    @property
    def id(self) -> str:
        digest = hashlib.sha256(f"{self.rendered}\n{self.source_ref}".encode("utf-8"))
        return digest.hexdigest()[:16]


@dataclass(frozen=True)
class EmbeddingRecord:
    owner: GraphRef
    vector: tuple[float, ...]
    embedder_id: str

    def __post_init__(self):
        norm = float(np.linalg.norm(np.asarray(self.vector, dtype=np.float64)))
        if not (1.0 - 1e-6) <= norm <= (1.0 + 1e-6):
            raise ValueError(f"embedding must be unit-norm, got {norm}")


@dataclass(frozen=True)
class KnowledgeGraph:
    nodes: dict[str, KgNode]
    edges: dict[tuple[str, str], KgEdge]

    @staticmethod
    def empty() -> "KnowledgeGraph":
        return KnowledgeGraph(nodes={}, edges={})

    def node_count(self) -> int:
        return len(self.nodes)

    def edge_count(self) -> int:
        return len(self.edges)

    def neighbors(self, key: str) -> list[tuple[str, KgEdge]]:
        """Adjacent node keys with the connecting edge, in key order."""
        out = []
        for (a, b), edge in self.edges.items():
            if a == key:
                out.append((b, edge))
            elif b == key:
                out.append((a, edge))
        out.sort(key=lambda pair: pair[0])
        return out


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def embed_content(owner: GraphRef, text: str, gateway) -> EmbeddingRecord:
    """Unit-normalized embedding for one artifact."""
    if not text:
        raise GatewayError(f"cannot embed empty text for {owner}")
    vector = gateway.embed([text])[0]
    return EmbeddingRecord(
        owner=owner,
        vector=tuple(float(x) for x in vector),
        embedder_id=f"{gateway.config.model}/d{gateway.config.embed_dim}",
    )


def extract_graph(piece: Chunk, gateway) -> tuple[list[KgNode], list[KgEdge]]:
    """Entities and relations for one passage; endpoints are always closed
    over the returned node list."""
    if not piece.text.strip():
        raise ValueError("chunk text must be non-empty")
    ref = chunk_ref(piece_pid(piece))
    try:
        entities = gateway.complete(GatewayRequest("extract_entities", {"text": piece.text}))[
            "entities"
        ]
        relations = gateway.complete(GatewayRequest("extract_relations", {"text": piece.text}))[
            "relations"
        ]
    except KeyError as exc:
        raise GatewayError(f"malformed extraction output: missing {exc}")
    nodes: dict[str, KgNode] = {}
    for ent in entities:
        try:
            node = KgNode(
                canonical_name=" ".join(str(ent["name"]).split()),
                entity_type=str(ent.get("type", "entity")),
                keywords=frozenset(ent.get("keywords", [])),
                description=truncate_utf8(str(ent.get("description", "")), DESCRIPTION_LIMIT),
                source_refs=frozenset({ref}),
            )
        except (KeyError, TypeError) as exc:
            raise GatewayError(f"malformed entity record: {exc}", raw_output=str(ent))
        nodes.setdefault(node.key, node)
    edges: dict[tuple[str, str], KgEdge] = {}
    for rel in relations:
        try:
            source, target = str(rel["source"]), str(rel["target"])
        except KeyError as exc:
            raise GatewayError(f"malformed relation record: {exc}", raw_output=str(rel))
        for name in (source, target):
            key = node_key(name)
            if key not in nodes:
                # endpoint closure: materialize an implicit node
                nodes[key] = KgNode(
                    canonical_name=" ".join(name.split()),
                    entity_type="entity",
                    keywords=frozenset(rel.get("keywords", [])) or frozenset({key}),
                    description="",
                    source_refs=frozenset({ref}),
                )
        a, b = sorted((node_key(source), node_key(target)))
        if a == b:
            continue
        keywords = frozenset(rel.get("keywords", []))
        edge = KgEdge(
            endpoints=(a, b),
            keywords=keywords or frozenset({a}),
            description=truncate_utf8(str(rel.get("description", "")), DESCRIPTION_LIMIT),
            source_refs=frozenset({ref}),
        )
        if (a, b) not in edges:
            edges[(a, b)] = edge
    return list(nodes.values()), list(edges.values())


def piece_pid(piece: Chunk):
    """Pid of the L2 object encapsulating this chunk (parent suffix + ordinal)."""
    from iodeep.pids import Level, Pid

    return Pid(
        domain=piece.parent_pid.domain,
        suffix=piece.parent_pid.suffix,
        level=Level.L2,
        parent_suffix=piece.parent_pid.suffix,
        ordinal=piece.ordinal,
    )


def profile_element(
    element: KgNode | KgEdge, source_texts: Sequence[str], gateway
) -> tuple[frozenset[str], str]:
    """Keywords and a concise description distilled from the source snippets."""
    if not source_texts:
        raise ValueError("profiling requires at least one source snippet")
    joined = "\n".join(source_texts)
    keywords = gateway.complete(GatewayRequest("keywords", {"text": joined}))["keywords"]
    summary = gateway.complete(GatewayRequest("summarize", {"text": joined}))["summary"]
    if not keywords:
        raise GatewayError("profiling produced no keywords")
    return frozenset(keywords), truncate_utf8(summary, DESCRIPTION_LIMIT)


def extract_atomic(piece: Chunk, gateway) -> list[AtomicFact]:
    """Minimal subject/attribute/value facts for one passage, deduplicated by id."""
    if not piece.text.strip():
        raise ValueError("chunk text must be non-empty")
    ref = chunk_ref(piece_pid(piece))
    raw = gateway.complete(GatewayRequest("extract_facts", {"text": piece.text}))["facts"]
    facts: dict[str, AtomicFact] = {}
    for record in raw:
        try:
            fact = AtomicFact(
                subject=str(record["subject"]).strip(),
                attribute=str(record["attribute"]).strip(),
                value=str(record["value"]).strip(),
                unit=(str(record["unit"]).strip() or None) if record.get("unit") else None,
                source_ref=ref,
                confidence=float(record.get("confidence", 0.8)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise GatewayError(f"malformed fact record: {exc}", raw_output=str(record))
        facts.setdefault(fact.id, fact)
    return list(facts.values())


# ---------------------------------------------------------------------------
# Merge
# ---------------------------------------------------------------------------

def _longest(a: str, b: str) -> str:
    """Deterministic description merge: longest, ties by lexicographic max."""
    return max(a, b, key=lambda s: (len(s), s))


def _merge_nodes(a: KgNode, b: KgNode) -> KgNode:
    return KgNode(
        canonical_name=min(a.canonical_name, b.canonical_name),
        entity_type=_longest(a.entity_type, b.entity_type),
        keywords=a.keywords | b.keywords,
        description=_longest(a.description, b.description),
        source_refs=a.source_refs | b.source_refs,
        mention_count=a.mention_count + b.mention_count,
    )


def _merge_edges(a: KgEdge, b: KgEdge) -> KgEdge:
    return KgEdge(
        endpoints=a.endpoints,
        keywords=a.keywords | b.keywords,
        description=_longest(a.description, b.description),
        source_refs=a.source_refs | b.source_refs,
        weight=a.weight + b.weight,
    )


def merge_graph(
    parts: Iterable[tuple[Sequence[KgNode], Sequence[KgEdge]] | KnowledgeGraph],
) -> KnowledgeGraph:
    """Union per-passage graphs: nodes by case-insensitive name, edges by
    unordered endpoint pair. Commutative and associative up to canonical
    ordering because every field merge is."""
    nodes: dict[str, KgNode] = {}
    edges: dict[tuple[str, str], KgEdge] = {}
    for part in parts:
        if isinstance(part, KnowledgeGraph):
            part_nodes: Sequence[KgNode] = list(part.nodes.values())
            part_edges: Sequence[KgEdge] = list(part.edges.values())
        else:
            part_nodes, part_edges = part
        for node in part_nodes:
            key = node.key
            nodes[key] = _merge_nodes(nodes[key], node) if key in nodes else node
        for edge in part_edges:
            key = edge.endpoints
            edges[key] = _merge_edges(edges[key], edge) if key in edges else edge
    for (a, b) in edges:
        for endpoint in (a, b):
            if endpoint not in nodes:
                raise ValueError(f"edge endpoint {endpoint!r} has no node")
    return KnowledgeGraph(nodes=nodes, edges=edges)


# ---------------------------------------------------------------------------
# Persistence: kg_nodes.jsonl / kg_edges.jsonl / facts.jsonl / embeddings.bin
# ---------------------------------------------------------------------------

def node_to_record(node: KgNode) -> dict:
    return {
        "canonical_name": node.canonical_name,
        "entity_type": node.entity_type,
        "keywords": sorted(node.keywords),
        "description": node.description,
        "source_refs": sorted(str(r) for r in node.source_refs),
        "mention_count": node.mention_count,
    }


def node_from_record(rec: dict) -> KgNode:
    return KgNode(
        canonical_name=rec["canonical_name"],
        entity_type=rec["entity_type"],
        keywords=frozenset(rec["keywords"]),
        description=rec["description"],
        source_refs=frozenset(parse_ref(r) for r in rec["source_refs"]),
        mention_count=rec["mention_count"],
    )


def edge_to_record(edge: KgEdge) -> dict:
    return {
        "endpoints": list(edge.endpoints),
        "keywords": sorted(edge.keywords),
        "description": edge.description,
        "source_refs": sorted(str(r) for r in edge.source_refs),
        "weight": edge.weight,
    }


def edge_from_record(rec: dict) -> KgEdge:
    return KgEdge(
        endpoints=tuple(rec["endpoints"]),
        keywords=frozenset(rec["keywords"]),
        description=rec["description"],
        source_refs=frozenset(parse_ref(r) for r in rec["source_refs"]),
        weight=rec["weight"],
    )


def fact_to_record(fact: AtomicFact) -> dict:
    return {
        "id": fact.id,
        "subject": fact.subject,
        "attribute": fact.attribute,
        "value": fact.value,
        "unit": fact.unit,
        "source_ref": str(fact.source_ref),
        "confidence": fact.confidence,
        "rendered": fact.rendered,
    }


def fact_from_record(rec: dict) -> AtomicFact:
    return AtomicFact(
        subject=rec["subject"],
        attribute=rec["attribute"],
        value=rec["value"],
        unit=rec.get("unit"),
        source_ref=parse_ref(rec["source_ref"]),
        confidence=rec["confidence"],
    )


def _write_jsonl(path: Path, records: Iterable[dict]):
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def _read_jsonl(path: Path) -> list[dict]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def save_kg(graph: KnowledgeGraph, directory: Path):
    directory = Path(directory)
    _write_jsonl(
        directory / "kg_nodes.jsonl",
        (node_to_record(graph.nodes[k]) for k in sorted(graph.nodes)),
    )
    _write_jsonl(
        directory / "kg_edges.jsonl",
        (edge_to_record(graph.edges[k]) for k in sorted(graph.edges)),
    )


def load_kg(directory: Path) -> KnowledgeGraph:
    directory = Path(directory)
    nodes = [node_from_record(r) for r in _read_jsonl(directory / "kg_nodes.jsonl")]
    edges = [edge_from_record(r) for r in _read_jsonl(directory / "kg_edges.jsonl")]
    return KnowledgeGraph(
        nodes={n.key: n for n in nodes}, edges={e.endpoints: e for e in edges}
    )


def save_facts(facts: Sequence[AtomicFact], directory: Path):
    _write_jsonl(
        Path(directory) / "facts.jsonl",
        (fact_to_record(f) for f in sorted(facts, key=lambda f: f.id)),
    )


def load_facts(directory: Path) -> list[AtomicFact]:
    return [fact_from_record(r) for r in _read_jsonl(Path(directory) / "facts.jsonl")]


def save_embeddings(records: Sequence[EmbeddingRecord], path: Path):
    """Flat binary file: magic, version/dim (u32 LE), count (u64 LE), then
    (length-prefixed owner-ref UTF-8, dim little-endian float32) per record."""
    records = sorted(records, key=lambda r: r.owner.sort_key())
    dims = {len(r.vector) for r in records}
    if len(dims) > 1:
        raise ValueError(f"mixed embedding dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with Path(path).open("wb") as fh:
        fh.write(EMBED_MAGIC)
        fh.write(struct.pack("<IIQ", EMBED_VERSION, dim, len(records)))
        for record in records:
            owner = str(record.owner).encode("utf-8")
            fh.write(struct.pack("<I", len(owner)))
            fh.write(owner)
            fh.write(np.asarray(record.vector, dtype="<f4").tobytes())


def load_embeddings(path: Path, embedder_id: str = "") -> list[EmbeddingRecord]:
    with Path(path).open("rb") as fh:
        magic = fh.read(4)
        if magic != EMBED_MAGIC:
            raise ValueError(f"bad embeddings file magic {magic!r}")
        version, dim, count = struct.unpack("<IIQ", fh.read(16))
        if version != EMBED_VERSION:
            raise ValueError(f"unsupported embeddings version {version}")
        records = []
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            owner = parse_ref(fh.read(name_len).decode("utf-8"))
            vector = np.frombuffer(fh.read(4 * dim), dtype="<f4")
            records.append(
                EmbeddingRecord(
                    owner=owner,
                    vector=tuple(float(x) for x in vector),
                    embedder_id=embedder_id,
                )
            )
    return records
