"""The heterogeneous index: one typed graph over objects, chunks, KG
elements, facts, and embeddings.

Immutable after build; rebuilds swap the whole structure. Links:
containment (object->chunk), derivation (chunk->node/edge/fact), semantic
(node--node via KG edges), plus embedding attachment per ref.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from iodeep.errors import IndexBuildError, NotFoundError
from iodeep.pids import Level, Pid, parse_pid
from iodeep.refine import AtomicFact, EmbeddingRecord, KnowledgeGraph
from iodeep.refs import GraphRef, chunk_ref, edge_ref, fact_ref, node_ref, object_ref, ref_pid
from iodeep.store import DigitalObject

LINK_KINDS = ("containment", "derivation", "semantic")
DIRECTIONS = ("out", "in", "both")


@dataclass
class HeteroGraph:
    registry: object  # ObjectStore or GlobalRegistry
    kg: KnowledgeGraph
    facts: dict[str, AtomicFact]
    embeddings: dict[GraphRef, EmbeddingRecord]
    containment_out: dict[GraphRef, tuple[GraphRef, ...]] = field(default_factory=dict)
    containment_in: dict[GraphRef, GraphRef] = field(default_factory=dict)
    derivation_out: dict[GraphRef, tuple[GraphRef, ...]] = field(default_factory=dict)
    derivation_in: dict[GraphRef, tuple[GraphRef, ...]] = field(default_factory=dict)

    # -- resolution -------------------------------------------------------

    def resolvable(self, ref: GraphRef) -> bool:
        if ref.tag in ("object", "chunk"):
            try:
                return self.registry.has(ref_pid(ref))
            except Exception:
                return False
        if ref.tag == "node":
            return ref.key in self.kg.nodes
        if ref.tag == "edge":
            from iodeep.refs import edge_endpoints

            return tuple(sorted(edge_endpoints(ref))) in self.kg.edges
        return ref.key in self.facts

    def _require(self, ref: GraphRef):
        if not self.resolvable(ref):
            raise NotFoundError(f"unresolvable ref {ref}")

    def object_for(self, ref: GraphRef) -> DigitalObject:
        return self.registry.get(ref_pid(ref))

    def neighbors(self, ref: GraphRef, link_kind: str, direction: str = "both") -> list[GraphRef]:
        """Linked refs; containment-out follows chunk ordinal order, all other
        lists the GraphRef total order."""
        if link_kind not in LINK_KINDS:
            raise ValueError(f"unknown link kind {link_kind!r}")
        if direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {direction!r}")
        self._require(ref)
        out: list[GraphRef] = []
        if link_kind == "containment":
            if direction in ("out", "both"):
                out.extend(self.containment_out.get(ref, ()))
            if direction in ("in", "both") and ref in self.containment_in:
                out.append(self.containment_in[ref])
        elif link_kind == "derivation":
            if direction in ("out", "both"):
                out.extend(self.derivation_out.get(ref, ()))
            if direction in ("in", "both"):
                out.extend(self.derivation_in.get(ref, ()))
        else:
            if ref.tag == "node":
                out.extend(node_ref(k) for k, _ in self.kg.neighbors(ref.key))
        if link_kind == "containment" and direction == "out":
            return out  # already in ordinal order
        return sorted(out, key=lambda r: r.sort_key())

    def resolve_to_objects(self, refs: Sequence[GraphRef]) -> list[Pid]:
        """Map refs through derivation/containment to their L1 pids,
        deduplicated in first-appearance order."""
        seen: set[Pid] = set()
        ordered: list[Pid] = []

        def visit(pid: Pid):
            if pid not in seen:
                seen.add(pid)
                ordered.append(pid)

        for ref in refs:
            self._require(ref)
            if ref.tag == "object":
                pid = ref_pid(ref)
                if pid.level is Level.L2:
                    visit(parse_pid(pid.parent_pid_text()))
                else:
                    visit(pid)
            elif ref.tag == "chunk":
                parent = self.containment_in.get(ref)
                if parent is None:
                    raise NotFoundError(f"chunk {ref} has no containing object")
                visit(ref_pid(parent))
            else:
                for source in self.derivation_in.get(ref, ()):
                    parent = self.containment_in.get(source)
                    if parent is None:
                        raise NotFoundError(f"chunk {source} has no containing object")
                    visit(ref_pid(parent))
        return ordered

    def chunk_text(self, ref: GraphRef) -> str:
        return self.registry.object_text(self.registry.get(ref_pid(ref)))

    def all_refs(self) -> list[GraphRef]:
        refs = [object_ref(o.pid) for o in self.registry.all_objects() if o.pid.level is Level.L1]
        refs += list(self.containment_in)
        refs += [node_ref(k) for k in self.kg.nodes]
        refs += [edge_ref(a, b) for a, b in self.kg.edges]
        refs += [fact_ref(i) for i in self.facts]
        return sorted(refs, key=lambda r: r.sort_key())

    def dump_debug(self, path: Path):
        """Optional typed-link dump (hetero_graph.jsonl), one link per line."""
        with Path(path).open("w", encoding="utf-8") as fh:
            for parent, children in sorted(
                self.containment_out.items(), key=lambda kv: kv[0].sort_key()
            ):
                for child in children:
                    fh.write(json.dumps({"kind": "containment", "from": str(parent), "to": str(child)}))
                    fh.write("\n")
            for source, derived in sorted(
                self.derivation_out.items(), key=lambda kv: kv[0].sort_key()
            ):
                for target in derived:
                    fh.write(json.dumps({"kind": "derivation", "from": str(source), "to": str(target)}))
                    fh.write("\n")
            for (a, b), edge in sorted(self.kg.edges.items()):
                fh.write(
                    json.dumps(
                        {"kind": "semantic", "from": f"node:{a}", "to": f"node:{b}", "weight": edge.weight}
                    )
                )
                fh.write("\n")


def build_index(
    registry,
    chunks: Sequence[DigitalObject] | None,
    kg: KnowledgeGraph,
    facts: Sequence[AtomicFact],
    embeddings: Sequence[EmbeddingRecord] = (),
) -> HeteroGraph:
    """Materialize all cross-layer links, validating every ref; deterministic
    for a given set of inputs regardless of their arrival order."""
    if chunks is None:
        chunks = [o for o in registry.all_objects() if o.pid.level is Level.L2]
    fact_map = {f.id: f for f in sorted(facts, key=lambda f: f.id)}
    graph = HeteroGraph(
        registry=registry,
        kg=kg,
        facts=fact_map,
        embeddings={},
    )

    # containment: object -> chunks (ordinal order), chunk -> object
    chunk_refs: set[GraphRef] = set()
    for chunk_obj in sorted(chunks, key=lambda o: o.pid):
        if chunk_obj.parent is None:
            raise IndexBuildError(f"chunk {chunk_obj.pid} has no parent")
        if not registry.has(chunk_obj.parent):
            raise IndexBuildError(f"dangling parent {chunk_obj.parent} of chunk {chunk_obj.pid}")
        cref = chunk_ref(chunk_obj.pid)
        chunk_refs.add(cref)
        graph.containment_in[cref] = object_ref(chunk_obj.parent)
    for obj in registry.all_objects():
        if obj.pid.level is Level.L1:
            oref = object_ref(obj.pid)
            children = tuple(
                chunk_ref(p) for p in obj.children if chunk_ref(p) in chunk_refs
            )
            if children:
                graph.containment_out[oref] = children

    # derivation: chunk -> {node, edge, fact}
    derivation_out: dict[GraphRef, list[GraphRef]] = {}
    derivation_in: dict[GraphRef, list[GraphRef]] = {}

    def link(source_chunk: GraphRef, target: GraphRef):
        if source_chunk not in chunk_refs:
            raise IndexBuildError(f"dangling derivation source {source_chunk} for {target}")
        derivation_out.setdefault(source_chunk, []).append(target)
        derivation_in.setdefault(target, []).append(source_chunk)

    for key in sorted(kg.nodes):
        node = kg.nodes[key]
        for source in sorted(node.source_refs, key=lambda r: r.sort_key()):
            link(source, node_ref(key))
    for pair in sorted(kg.edges):
        edge = kg.edges[pair]
        for endpoint in pair:
            if endpoint not in kg.nodes:
                raise IndexBuildError(f"edge {pair} endpoint {endpoint!r} missing from nodes")
        for source in sorted(edge.source_refs, key=lambda r: r.sort_key()):
            link(source, edge_ref(*pair))
    for fact_id in sorted(fact_map):
        link(fact_map[fact_id].source_ref, fact_ref(fact_id))

    graph.derivation_out = {
        k: tuple(sorted(set(v), key=lambda r: r.sort_key())) for k, v in derivation_out.items()
    }
    graph.derivation_in = {
        k: tuple(sorted(set(v), key=lambda r: r.sort_key())) for k, v in derivation_in.items()
    }

    # embeddings: owner must resolve
    for record in embeddings:
        if not graph.resolvable(record.owner):
            raise IndexBuildError(f"embedding owner {record.owner} unresolvable")
        graph.embeddings[record.owner] = record
    return graph
