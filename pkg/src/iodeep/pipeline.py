"""End-to-end drivers: ingest a directory of files, refine the corpus, build
the heterogeneous index, and persist/reload every artifact under one data
root.

Layout under the data root:
    objects.jsonl          digital object records (append-friendly)
    payloads/{sha256}      raw content, addressed by full digest
    kg_nodes.jsonl / kg_edges.jsonl / facts.jsonl
    embeddings.bin         binary vector file (see refine.save_embeddings)
    hetero_graph.jsonl     optional debug dump of typed links
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace as _replace
from pathlib import Path

from iodeep.config import Config
from iodeep.errors import ParseError
from iodeep.hetero import HeteroGraph, build_index
from iodeep.ingest import (
    Chunk,
    ChunkPolicy,
    chunk_document,
    describe_nontextual,
    encapsulate_l2,
    enrich_metadata,
    parse_entity,
)
from iodeep.pids import Level
from iodeep.refine import (
    EmbeddingRecord,
    KnowledgeGraph,
    embed_content,
    extract_atomic,
    extract_graph,
    load_embeddings,
    load_facts,
    load_kg,
    merge_graph,
    profile_element,
    save_embeddings,
    save_facts,
    save_kg,
)
from iodeep.refs import chunk_ref, fact_ref, node_ref, object_ref
from iodeep.textproc import tokenize
from iodeep.search import Retriever, SearchIndex
from iodeep.store import DigitalObject, ObjectStore, new_object

MEDIA_BY_SUFFIX = {
    ".txt": "text/plain",
    ".md": "text/markdown",
    ".csv": "text/csv",
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".gif": "image/gif",
    ".wav": "audio/wav",
    ".mp3": "audio/mpeg",
}

KIND_BY_BINARY = {"image": "image", "audio": "audio"}


@dataclass
class IngestReport:
    registered: list[str]
    chunks: int
    skipped: list[str]


def _media_type_for(path: Path) -> str | None:
    return MEDIA_BY_SUFFIX.get(path.suffix.lower())


def _load_manifest(directory: Path) -> dict[str, dict]:
    manifest_path = directory / "manifest.jsonl"
    entries: dict[str, dict] = {}
    if manifest_path.exists():
        for line in manifest_path.read_text("utf-8").splitlines():
            if line.strip():
                entry = json.loads(line)
                entries[entry["file"]] = entry
    return entries


def ingest_file(
    store: ObjectStore,
    path: Path,
    domain: str,
    config: Config,
    meta: dict | None = None,
) -> DigitalObject:
    """Parse one file, register its L1 object, and encapsulate its chunks."""
    meta = meta or {}
    media_type = meta.get("media_type") or _media_type_for(path)
    raw = path.read_bytes()
    if media_type is None:
        if config.ingestion.external_parser is None:
            raise ParseError(f"no parser for {path.name!r} and no external hook configured")
        media_type = "application/octet-stream"
    parsed = parse_entity(raw, media_type, external_parser=config.ingestion.external_parser)
    if parsed.binary_kind:
        kind = KIND_BY_BINARY[parsed.binary_kind]
    elif parsed.tables:
        kind = "table"
    else:
        kind = "document"
    obj = new_object(
        domain=domain,
        kind=kind,
        payload=raw,
        store=store,
        title=meta.get("title", path.stem),
        source=meta.get("source", str(path)),
        media_type=media_type,
        timestamp=meta.get("timestamp"),
        labels=meta.get("labels", ()),
        parser_id=parsed.parser_id,
    )
    store.register(obj)
    text = parsed.text
    if text:
        policy = ChunkPolicy(
            max_chunk_chars=config.ingestion.max_chunk_chars,
            overlap_chars=config.ingestion.overlap_chars,
            sentence_snap=config.ingestion.sentence_snap,
        )
        for piece in chunk_document(obj, text, policy):
            encapsulate_l2(obj, piece, store)
    return store.get(obj.pid)


def ingest_dir(store: ObjectStore, directory: Path, domain: str, config: Config) -> IngestReport:
    """Ingest every supported file in a directory (manifest-aware)."""
    directory = Path(directory)
    manifest = _load_manifest(directory)
    registered: list[str] = []
    skipped: list[str] = []
    chunk_count = 0
    files = sorted(p for p in directory.iterdir() if p.is_file() and p.name != "manifest.jsonl")

    def _one(path: Path):
        meta = manifest.get(path.name)
        file_domain = (meta or {}).get("domain", domain)
        return ingest_file(store, path, file_domain, config, meta)

    with ThreadPoolExecutor(max_workers=config.ingestion.parallelism) as pool:
        results = list(pool.map(lambda p: (p, _try(_one, p)), files))
    for path, outcome in results:
        if isinstance(outcome, Exception):
            skipped.append(f"{path.name}: {outcome}")
        else:
            registered.append(str(outcome.pid))
            chunk_count += len(outcome.children)
    return IngestReport(registered=registered, chunks=chunk_count, skipped=skipped)


def _try(fn, *args):
    try:
        return fn(*args)
    except Exception as exc:  # noqa: BLE001 - reported per file
        return exc


def _chunks_of(store: ObjectStore) -> list[tuple[DigitalObject, Chunk]]:
    """All chunk L2 objects paired with their span records, in pid order."""
    out = []
    for obj in store.all_objects():
        if obj.pid.level is not Level.L2 or obj.parent is None:
            continue
        text = store.object_text(obj)
        if not text:
            continue
        parent = store.get(obj.parent)
        out.append(
            (
                obj,
                Chunk(
                    parent_pid=parent.pid,
                    ordinal=obj.pid.ordinal or 0,
                    start=0,
                    end=len(text),
                    text=text,
                ),
            )
        )
    return out


@dataclass
class CorpusIndex:
    store: ObjectStore
    kg: KnowledgeGraph
    facts: list
    embeddings: list[EmbeddingRecord]
    graph: HeteroGraph
    retriever: Retriever


def refine_and_index(store: ObjectStore, gateway, config: Config, data_dir: Path | None = None) -> CorpusIndex:
    """Refine all chunks, enrich all L1 objects, embed, and build the index.

    Chunk extraction iterates in sorted pid order, so the output is
    byte-reproducible under the mock gateway no matter how ingestion ran.
    """
    pairs = _chunks_of(store)
    per_chunk_graphs = []
    facts = []
    facts_by_parent: dict[str, list] = {}
    for obj, piece in pairs:
        if not piece.text.strip():
            continue
        per_chunk_graphs.append(extract_graph(piece, gateway))
        chunk_facts = extract_atomic(piece, gateway)
        facts.extend(chunk_facts)
        parent_text = obj.pid.parent_pid_text()
        facts_by_parent.setdefault(parent_text, []).extend(chunk_facts)
    kg = merge_graph(per_chunk_graphs)

    # profile merged elements from their source snippets; name tokens of
    # OTHER nodes are filtered out so profiling stays thematic and cannot
    # cross-contaminate keyword seeds
    chunk_text_by_ref = {str(chunk_ref(obj.pid)): piece.text for obj, piece in pairs}
    all_name_tokens: dict[str, set[str]] = {
        key: set(tokenize(kg.nodes[key].canonical_name)) for key in kg.nodes
    }
    profiled_nodes = {}
    for key in sorted(kg.nodes):
        node = kg.nodes[key]
        snippets = [
            chunk_text_by_ref[str(r)]
            for r in sorted(node.source_refs, key=lambda r: r.sort_key())
            if str(r) in chunk_text_by_ref
        ]
        if snippets:
            keywords, description = profile_element(node, snippets, gateway)
            foreign = {
                t
                for other, tokens in all_name_tokens.items()
                if other != key
                for t in tokens
            } - all_name_tokens[key]
            keywords = frozenset(
                kw for kw in keywords if not set(tokenize(kw)) & foreign
            )
            node = _replace(
                node, keywords=node.keywords | keywords, description=description or node.description
            )
        profiled_nodes[key] = node
    kg = KnowledgeGraph(nodes=profiled_nodes, edges=kg.edges)

    # enrichment: documents/tables get summaries etc.; media get descriptions
    for obj in store.all_objects():
        if obj.pid.level is not Level.L1 or obj.enriched_meta is not None:
            continue
        if obj.kind in ("image", "audio"):
            describe_nontextual(obj, gateway, store)
            continue
        highlights = tuple(
            f.rendered
            for f in sorted(facts_by_parent.get(str(obj.pid), []), key=lambda f: f.id)[:3]
        )
        text = store.object_text(obj)
        if text.strip():
            enrich_metadata(obj, gateway, store, text=text, refinement_highlights=highlights)

    # embeddings: chunks, objects (title+summary), facts, optionally nodes
    embeddings: list[EmbeddingRecord] = []
    for obj, piece in pairs:
        if piece.text.strip():
            embeddings.append(embed_content(chunk_ref(obj.pid), piece.text, gateway))
    for obj in store.all_objects():
        if obj.pid.level is not Level.L1:
            continue
        fresh = store.get(obj.pid)
        parts = [fresh.explicit_meta.title]
        if fresh.enriched_meta:
            parts.append(fresh.enriched_meta.summary)
        text = "\n".join(p for p in parts if p)
        if text.strip():
            embeddings.append(embed_content(object_ref(fresh.pid), text, gateway))
    for fact in sorted(facts, key=lambda f: f.id):
        embeddings.append(embed_content(fact_ref(fact.id), fact.rendered, gateway))
    if config.index.embed_nodes:
        for key in sorted(kg.nodes):
            node = kg.nodes[key]
            embeddings.append(
                embed_content(
                    node_ref(key),
                    " ".join([node.canonical_name, *sorted(node.keywords)]),
                    gateway,
                )
            )

    graph = build_index(store, None, kg, facts, embeddings)
    if data_dir is not None:
        data_dir = Path(data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        save_kg(kg, data_dir)
        save_facts(facts, data_dir)
        save_embeddings(embeddings, data_dir / "embeddings.bin")
        graph.dump_debug(data_dir / "hetero_graph.jsonl")
        store.compact()
    index = SearchIndex(graph)
    return CorpusIndex(
        store=store,
        kg=kg,
        facts=facts,
        embeddings=embeddings,
        graph=graph,
        retriever=Retriever(index, gateway, max_hops=config.retrieval.max_hops),
    )


def load_corpus(data_dir: Path, gateway, config: Config) -> CorpusIndex:
    """Reload a previously refined corpus from its data root."""
    data_dir = Path(data_dir)
    store = ObjectStore(data_dir)
    kg = load_kg(data_dir)
    facts = load_facts(data_dir)
    embeddings = load_embeddings(
        data_dir / "embeddings.bin",
        embedder_id=f"{gateway.config.model}/d{gateway.config.embed_dim}",
    )
    graph = build_index(store, None, kg, facts, embeddings)
    index = SearchIndex(graph)
    return CorpusIndex(
        store=store,
        kg=kg,
        facts=facts,
        embeddings=embeddings,
        graph=graph,
        retriever=Retriever(index, gateway, max_hops=config.retrieval.max_hops),
    )
