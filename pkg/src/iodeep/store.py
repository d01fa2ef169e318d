"""Digital object registry: registration, lookup, domain listing, federation.

Persistence is an append-friendly ``objects.jsonl`` (one record per line;
later records for the same pid supersede earlier ones) plus a
content-addressed ``payloads/{sha256}`` directory. Record field names are
part of the on-disk contract (see README).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from iodeep.errors import ConflictError, NotFoundError
from iodeep.pids import Level, Pid, digest_payload, mint_pid, parse_pid

KINDS = ("document", "image", "audio", "table", "chunk")


def utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class ExplicitMetadata:
    title: str
    source: str
    timestamp: str
    media_type: str
    domain: str
    labels: frozenset[str] = frozenset()

    def __post_init__(self):
        # must parse; stored canonically as ISO-8601
        datetime.fromisoformat(self.timestamp)


@dataclass(frozen=True)
class EnrichedMetadata:
    summary: str
    hypothetical_questions: tuple[str, ...]
    classification_labels: frozenset[str]
    keywords: frozenset[str]
    multimodal_description: Optional[str] = None
    refinement_highlights: tuple[str, ...] = ()
    enrichment_provenance: str = ""


@dataclass(frozen=True)
class PayloadRef:
    sha256: str
    length: int


@dataclass(frozen=True)
class Provenance:
    source_uri: str
    parser_id: str
    tool_version: str


@dataclass(frozen=True)
class DigitalObject:
    pid: Pid
    kind: str
    payload_ref: PayloadRef
    explicit_meta: ExplicitMetadata
    provenance: Provenance
    created_at: str
    enriched_meta: Optional[EnrichedMetadata] = None
    children: tuple[Pid, ...] = ()
    parent: Optional[Pid] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        is_chunk = self.kind == "chunk"
        if is_chunk != (self.pid.level is Level.L2) or is_chunk != (self.parent is not None):
            raise ValueError("kind=chunk iff pid is L2 iff parent is set")
        if self.explicit_meta.domain != self.pid.domain:
            raise ValueError(
                f"metadata domain {self.explicit_meta.domain!r} != pid domain {self.pid.domain!r}"
            )
        ordinals = [p.ordinal for p in self.children]
        if any(o is None for o in ordinals) or any(
            b <= a for a, b in zip(ordinals, ordinals[1:])
        ):
            raise ValueError("children ordinals must be strictly increasing L2 pids")


@dataclass(frozen=True)
class Receipt:
    pid: Pid
    stored_at: str


# --- record (de)serialization -------------------------------------------------

def object_to_record(obj: DigitalObject) -> dict:
    rec = {
        "pid": str(obj.pid),
        "suffix": obj.pid.suffix,
        "kind": obj.kind,
        "payload": {"sha256": obj.payload_ref.sha256, "length": obj.payload_ref.length},
        "explicit_meta": {
            "title": obj.explicit_meta.title,
            "source": obj.explicit_meta.source,
            "timestamp": obj.explicit_meta.timestamp,
            "media_type": obj.explicit_meta.media_type,
            "domain": obj.explicit_meta.domain,
            "labels": sorted(obj.explicit_meta.labels),
        },
        "provenance": {
            "source_uri": obj.provenance.source_uri,
            "parser_id": obj.provenance.parser_id,
            "tool_version": obj.provenance.tool_version,
        },
        "created_at": obj.created_at,
        "children": [str(p) for p in obj.children],
        "parent": str(obj.parent) if obj.parent else None,
    }
    if obj.enriched_meta is not None:
        em = obj.enriched_meta
        rec["enriched_meta"] = {
            "summary": em.summary,
            "hypothetical_questions": list(em.hypothetical_questions),
            "classification_labels": sorted(em.classification_labels),
            "keywords": sorted(em.keywords),
            "multimodal_description": em.multimodal_description,
            "refinement_highlights": list(em.refinement_highlights),
            "enrichment_provenance": em.enrichment_provenance,
        }
    return rec


def object_from_record(rec: dict) -> DigitalObject:
    pid = parse_pid(rec["pid"])
    if pid.level is Level.L1:
        pid = replace(pid, suffix=rec["suffix"])
    else:
        pid = Pid(
            domain=pid.domain,
            suffix=rec["suffix"],
            level=Level.L2,
            parent_suffix=pid.parent_suffix,
            ordinal=pid.ordinal,
        )
    em = None
    if rec.get("enriched_meta") is not None:
        raw = rec["enriched_meta"]
        em = EnrichedMetadata(
            summary=raw["summary"],
            hypothetical_questions=tuple(raw["hypothetical_questions"]),
            classification_labels=frozenset(raw["classification_labels"]),
            keywords=frozenset(raw["keywords"]),
            multimodal_description=raw.get("multimodal_description"),
            refinement_highlights=tuple(raw.get("refinement_highlights", ())),
            enrichment_provenance=raw.get("enrichment_provenance", ""),
        )
    meta = rec["explicit_meta"]
    return DigitalObject(
        pid=pid,
        kind=rec["kind"],
        payload_ref=PayloadRef(rec["payload"]["sha256"], rec["payload"]["length"]),
        explicit_meta=ExplicitMetadata(
            title=meta["title"],
            source=meta["source"],
            timestamp=meta["timestamp"],
            media_type=meta["media_type"],
            domain=meta["domain"],
            labels=frozenset(meta["labels"]),
        ),
        provenance=Provenance(
            source_uri=rec["provenance"]["source_uri"],
            parser_id=rec["provenance"]["parser_id"],
            tool_version=rec["provenance"]["tool_version"],
        ),
        created_at=rec["created_at"],
        enriched_meta=em,
        children=tuple(parse_pid(p) for p in rec["children"]),
        parent=parse_pid(rec["parent"]) if rec.get("parent") else None,
    )


class PayloadStore:
    """Content-addressed raw bytes under ``payloads/{sha256_hex}``."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, payload: bytes) -> PayloadRef:
        digest = digest_payload(payload).hex()
        path = self.root / digest
        if not path.exists():
            path.write_bytes(payload)
        return PayloadRef(sha256=digest, length=len(payload))

    def get(self, ref: PayloadRef) -> bytes:
        path = self.root / ref.sha256
        if not path.exists():
            raise NotFoundError(f"payload {ref.sha256} not stored")
        return path.read_bytes()

    def has(self, ref: PayloadRef) -> bool:
        return (self.root / ref.sha256).exists()


class ObjectStore:
    """Registry for one data root: many readers, one serialized writer path.

    Objects are immutable after registration except two transitions:
    attaching enriched metadata (a one-shot compare-and-set) and extending a
    parent's children list during chunk encapsulation.
    """

    def __init__(self, root: Path | None = None):
        self.root = Path(root) if root is not None else None
        self._objects: dict[Pid, DigitalObject] = {}
        self._lock = threading.Lock()
        self._log = None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            self.payloads = PayloadStore(self.root / "payloads")
            self._records_path = self.root / "objects.jsonl"
            self._load()
        else:
            import tempfile

            self.payloads = PayloadStore(Path(tempfile.mkdtemp(prefix="iodeep-payloads-")))
            self._records_path = None

    # -- persistence ------------------------------------------------------

    def _load(self):
        if self._records_path is None or not self._records_path.exists():
            return
        with self._records_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = object_from_record(json.loads(line))
                self._objects[obj.pid] = obj  # later records supersede

    def _append(self, obj: DigitalObject):
        if self._records_path is None:
            return
        with self._records_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(object_to_record(obj), ensure_ascii=False, sort_keys=True))
            fh.write("\n")

    def compact(self):
        """Rewrite objects.jsonl with exactly one (current) record per pid."""
        if self._records_path is None:
            return
        with self._lock:
            tmp = self._records_path.with_suffix(".jsonl.tmp")
            with tmp.open("w", encoding="utf-8") as fh:
                for pid in sorted(self._objects):
                    fh.write(
                        json.dumps(
                            object_to_record(self._objects[pid]),
                            ensure_ascii=False,
                            sort_keys=True,
                        )
                    )
                    fh.write("\n")
            tmp.replace(self._records_path)

    # -- core operations ----------------------------------------------------

    def register(self, obj: DigitalObject) -> Receipt:
        """Register an object; idempotent for byte-identical re-registration."""
        with self._lock:
            existing = self._objects.get(obj.pid)
            if existing is not None:
                if existing == obj:
                    return Receipt(pid=obj.pid, stored_at=existing.created_at)
                raise ConflictError(
                    f"pid {obj.pid} already registered with different content"
                )
            if obj.parent is not None and obj.parent not in self._objects:
                raise NotFoundError(f"parent {obj.parent} not registered")
            self._objects[obj.pid] = obj
            self._append(obj)
            return Receipt(pid=obj.pid, stored_at=obj.created_at)

    def get(self, pid: Pid) -> DigitalObject:
        obj = self._objects.get(pid)
        if obj is None:
            raise NotFoundError(f"pid {pid} not registered")
        return obj

    def has(self, pid: Pid) -> bool:
        return pid in self._objects

    def list_domain(self, domain: str) -> list[Pid]:
        """L1 pids registered under a domain, ordered by created_at then suffix."""
        pids = [
            obj.pid
            for obj in self._objects.values()
            if obj.pid.domain == domain and obj.pid.level is Level.L1
        ]
        pids.sort(key=lambda p: (self._objects[p].created_at, p.suffix))
        return pids

    def all_objects(self) -> list[DigitalObject]:
        return [self._objects[pid] for pid in sorted(self._objects)]

    def domains(self) -> list[str]:
        return sorted({pid.domain for pid in self._objects})

    def __len__(self) -> int:
        return len(self._objects)

    # -- transitions --------------------------------------------------------

    def attach_enrichment(self, pid: Pid, enriched: EnrichedMetadata) -> DigitalObject:
        """One-shot absent -> present transition of enriched metadata."""
        with self._lock:
            obj = self._objects.get(pid)
            if obj is None:
                raise NotFoundError(f"pid {pid} not registered")
            if obj.enriched_meta is not None:
                if obj.enriched_meta == enriched:
                    return obj
                raise ConflictError(f"pid {pid} already enriched")
            updated = replace(obj, enriched_meta=enriched)
            self._objects[pid] = updated
            self._append(updated)
            return updated

    def attach_child(self, parent_pid: Pid, child_pid: Pid) -> DigitalObject:
        """Extend a parent's children list; idempotent for an existing child."""
        with self._lock:
            parent = self._objects.get(parent_pid)
            if parent is None:
                raise NotFoundError(f"parent {parent_pid} not registered")
            if child_pid in parent.children:
                return parent
            ordinals = {p.ordinal for p in parent.children}
            if child_pid.ordinal in ordinals:
                raise ConflictError(
                    f"ordinal {child_pid.ordinal} already present under {parent_pid}"
                )
            children = tuple(sorted((*parent.children, child_pid), key=lambda p: p.ordinal))
            updated = replace(parent, children=children)
            self._objects[parent_pid] = updated
            self._append(updated)
            return updated

    # -- payload helpers ------------------------------------------------------

    def store_payload(self, payload: bytes) -> PayloadRef:
        return self.payloads.put(payload)

    def payload_bytes(self, obj: DigitalObject) -> bytes:
        return self.payloads.get(obj.payload_ref)

    def object_text(self, obj: DigitalObject) -> str:
        """Decode an object's payload as UTF-8 text (documents, chunks, tables)."""
        return self.payload_bytes(obj).decode("utf-8")


class GlobalRegistry:
    """Federated view over domain registries; resolves pids without copying."""

    def __init__(self, members: Iterable[ObjectStore]):
        self._members = list(members)
        if len({id(s) for s in self._members}) != len(self._members):
            raise ConflictError("duplicate member registry in federation")
        self._by_domain: dict[str, ObjectStore] = {}
        for store in self._members:
            for domain in store.domains():
                if domain in self._by_domain:
                    raise ConflictError(f"duplicate domain {domain!r} in federation")
                self._by_domain[domain] = store

    def get(self, pid: Pid) -> DigitalObject:
        store = self._by_domain.get(pid.domain)
        if store is not None:
            return store.get(pid)
        for member in self._members:
            if member.has(pid):
                return member.get(pid)
        raise NotFoundError(f"pid {pid} not resolvable in federation")

    def list_domain(self, domain: str) -> list[Pid]:
        store = self._by_domain.get(domain)
        return store.list_domain(domain) if store else []

    def domains(self) -> list[str]:
        return sorted(self._by_domain)

    def all_objects(self) -> list[DigitalObject]:
        objs = [obj for member in self._members for obj in member.all_objects()]
        objs.sort(key=lambda o: o.pid)
        return objs

    def has(self, pid: Pid) -> bool:
        return any(member.has(pid) for member in self._members)

    def payload_bytes(self, obj: DigitalObject) -> bytes:
        store = self._by_domain.get(obj.pid.domain)
        if store is None:
            raise NotFoundError(f"no member registry for domain {obj.pid.domain!r}")
        return store.payload_bytes(obj)

    def object_text(self, obj: DigitalObject) -> str:
        return self.payload_bytes(obj).decode("utf-8")


def federate(members: Iterable[ObjectStore]) -> GlobalRegistry:
    """Build a global lookup over domain registries; domain names must not clash."""
    return GlobalRegistry(members)


def new_object(
    *,
    domain: str,
    kind: str,
    payload: bytes,
    store: ObjectStore,
    title: str,
    source: str,
    media_type: str,
    timestamp: str | None = None,
    labels: Iterable[str] = (),
    parser_id: str = "iodeep.native",
    parent: DigitalObject | None = None,
    ordinal: int | None = None,
    created_at: str | None = None,
) -> DigitalObject:
    """Mint a pid for the payload, persist the payload, and build the object."""
    payload_ref = store.store_payload(payload)
    pid = mint_pid(
        domain,
        bytes.fromhex(payload_ref.sha256),
        parent=parent.pid if parent else None,
        ordinal=ordinal,
    )
    created = created_at or timestamp or utcnow()
    return DigitalObject(
        pid=pid,
        kind=kind,
        payload_ref=payload_ref,
        explicit_meta=ExplicitMetadata(
            title=title,
            source=source,
            timestamp=timestamp or created,
            media_type=media_type,
            domain=domain,
            labels=frozenset(labels),
        ),
        provenance=Provenance(source_uri=source, parser_id=parser_id, tool_version="iodeep/0.1.0"),
        created_at=created,
        parent=parent.pid if parent else None,
    )
