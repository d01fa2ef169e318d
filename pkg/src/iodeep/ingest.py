"""Parsing, chunking, L2 encapsulation, and metadata enrichment.

Native parsers cover plain text, markdown, CSV, and image/audio stubs;
anything else goes through the configured external-parser hook (a command
that writes markdown to stdout). Chunking is a character window with
optional sentence snapping.
"""

from __future__ import annotations

import csv
import io
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from iodeep.errors import GatewayError, ParseError
from iodeep.gateway import GatewayRequest
from iodeep.store import DigitalObject, EnrichedMetadata, ObjectStore, new_object
from iodeep.pids import Pid

TEXT_MEDIA_TYPES = {"text/plain", "text/markdown"}
CSV_MEDIA_TYPES = {"text/csv"}
IMAGE_MEDIA_PREFIX = "image/"
AUDIO_MEDIA_PREFIX = "audio/"

SENTENCE_TERMINATORS = ".!?。！？\n"
SNAP_WINDOW = 200


@dataclass(frozen=True)
class ParsedEntity:
    media_type: str
    text: str
    tables: tuple[tuple[tuple[str, ...], tuple[tuple[str, ...], ...]], ...] = ()
    binary_kind: Optional[str] = None
    parser_id: str = "iodeep.native"


@dataclass(frozen=True)
class Chunk:
    parent_pid: Pid
    ordinal: int
    start: int
    end: int
    text: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError("chunk span must be non-empty and ordered")
        if len(self.text) != self.end - self.start:
            raise ValueError("chunk text must equal the covered span")


@dataclass(frozen=True)
class ChunkPolicy:
    max_chunk_chars: int = 2000
    overlap_chars: int = 200
    sentence_snap: bool = True

    def __post_init__(self):
        if self.max_chunk_chars <= 0:
            raise ValueError("max_chunk_chars must be positive")
        if not 0 <= self.overlap_chars < self.max_chunk_chars:
            raise ValueError("overlap_chars must be in [0, max_chunk_chars)")


def textualize_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Render a table as one 'key: value' line group per row."""
    lines = []
    for row in rows:
        lines.append(" | ".join(f"{h}: {v}" for h, v in zip(header, row)))
    return "\n".join(lines)


def parse_entity(
    raw: bytes,
    media_type: str,
    external_parser: str | None = None,
) -> ParsedEntity:
    """Extract text/structure from raw bytes according to the media type."""
    if media_type in TEXT_MEDIA_TYPES:
        try:
            return ParsedEntity(media_type=media_type, text=raw.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise ParseError(f"undecodable {media_type} payload: {exc}")
    if media_type in CSV_MEDIA_TYPES:
        return _parse_csv(raw, media_type)
    if media_type.startswith(IMAGE_MEDIA_PREFIX):
        return ParsedEntity(media_type=media_type, text="", binary_kind="image")
    if media_type.startswith(AUDIO_MEDIA_PREFIX):
        return ParsedEntity(media_type=media_type, text="", binary_kind="audio")
    if external_parser:
        return _run_external_parser(raw, media_type, external_parser)
    raise ParseError(f"unsupported media type {media_type!r} and no external parser configured")


def _parse_csv(raw: bytes, media_type: str) -> ParsedEntity:
    try:
        text = raw.decode("utf-8")
        reader = csv.reader(io.StringIO(text))
        rows = [tuple(cell.strip() for cell in row) for row in reader if row]
    except (UnicodeDecodeError, csv.Error) as exc:
        raise ParseError(f"malformed CSV: {exc}")
    if not rows:
        raise ParseError("malformed CSV: no rows")
    header, data = rows[0], tuple(rows[1:])
    width = len(header)
    if any(len(row) != width for row in data):
        raise ParseError("malformed CSV: ragged rows")
    return ParsedEntity(
        media_type=media_type,
        text=textualize_table(header, data),
        tables=((header, data),),
    )


def _run_external_parser(raw: bytes, media_type: str, command_template: str) -> ParsedEntity:
    """Run the hook command; it receives the input path and must print markdown."""
    with tempfile.NamedTemporaryFile(suffix=".bin", delete=False) as tmp:
        tmp.write(raw)
        input_path = tmp.name
    try:
        argv = [part.replace("{input}", input_path) for part in shlex.split(command_template)]
        proc = subprocess.run(argv, capture_output=True, timeout=120)
        if proc.returncode != 0:
            raise ParseError(
                f"external parser exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace')[:500]}"
            )
        return ParsedEntity(
            media_type=media_type,
            text=proc.stdout.decode("utf-8"),
            parser_id=f"external:{argv[0]}",
        )
    finally:
        Path(input_path).unlink(missing_ok=True)


def _snap_end(text: str, start: int, end: int, overlap: int) -> int:
    """Retreat ``end`` to just after the nearest sentence terminator within
    the snap window, keeping enough room for the next chunk to make progress."""
    window_start = max(start + 1, end - SNAP_WINDOW)
    for pos in range(end, window_start - 1, -1):
        if text[pos - 1] in SENTENCE_TERMINATORS:
            if pos - start > overlap:
                return pos
            break
    return end


def chunk(text: str, policy: ChunkPolicy = ChunkPolicy()) -> list[tuple[int, int]]:
    """Character-window spans covering [0, len(text)) with the configured
    stride; consecutive spans overlap by exactly ``overlap_chars`` except the
    final one."""
    n = len(text)
    if n == 0:
        return []
    spans: list[tuple[int, int]] = []
    start = 0
    while True:
        end = min(start + policy.max_chunk_chars, n)
        if end < n and policy.sentence_snap:
            end = _snap_end(text, start, end, policy.overlap_chars)
        spans.append((start, end))
        if end >= n:
            break
        start = end - policy.overlap_chars
    return spans


def chunk_document(parent: DigitalObject, text: str, policy: ChunkPolicy = ChunkPolicy()) -> list[Chunk]:
    return [
        Chunk(parent_pid=parent.pid, ordinal=i, start=s, end=e, text=text[s:e])
        for i, (s, e) in enumerate(chunk(text, policy))
    ]


def encapsulate_l2(parent: DigitalObject, piece: Chunk, store: ObjectStore) -> DigitalObject:
    """Mint and register the L2 object for one chunk and attach it to its parent."""
    if piece.parent_pid != parent.pid:
        raise ValueError(f"chunk parent {piece.parent_pid} != {parent.pid}")
    parent = store.get(parent.pid)
    child = new_object(
        domain=parent.pid.domain,
        kind="chunk",
        payload=piece.text.encode("utf-8"),
        store=store,
        title=f"{parent.explicit_meta.title} [chunk {piece.ordinal}]",
        source=parent.explicit_meta.source,
        media_type="text/plain",
        timestamp=parent.explicit_meta.timestamp,
        labels=parent.explicit_meta.labels,
        parser_id=parent.provenance.parser_id,
        parent=parent,
        ordinal=piece.ordinal,
        created_at=parent.created_at,
    )
    existing = {p.ordinal: p for p in parent.children}
    if piece.ordinal in existing and existing[piece.ordinal] != child.pid:
        raise ValueError(f"ordinal {piece.ordinal} already present under {parent.pid}")
    store.register(child)
    store.attach_child(parent.pid, child.pid)
    return child


def enrichable_text(obj: DigitalObject, store: ObjectStore, parsed: ParsedEntity | None = None) -> str:
    if parsed is not None and parsed.text:
        return parsed.text
    if parsed is not None and parsed.tables:
        return "\n".join(textualize_table(h, r) for h, r in parsed.tables)
    if obj.kind in ("document", "chunk", "table"):
        return store.object_text(obj)
    return ""


def enrich_metadata(
    obj: DigitalObject,
    gateway,
    store: ObjectStore,
    *,
    text: str | None = None,
    refinement_highlights: Sequence[str] = (),
) -> EnrichedMetadata:
    """Populate summary/questions/labels/keywords and attach them (one-shot)."""
    if obj.kind in ("image", "audio"):
        raise ValueError(f"{obj.kind} objects are enriched via describe_nontextual")
    content = text if text is not None else enrichable_text(obj, store)
    if not content.strip():
        raise ValueError(f"object {obj.pid} has no text to enrich")
    summary = gateway.complete(GatewayRequest("summarize", {"text": content}))["summary"]
    keywords = gateway.complete(GatewayRequest("keywords", {"text": content}))["keywords"]
    questions = gateway.complete(GatewayRequest("hypothetical_questions", {"text": content}))[
        "questions"
    ]
    labels = gateway.complete(
        GatewayRequest("classify", {"text": content, "kind": obj.kind})
    )["labels"]
    if not keywords:
        raise GatewayError(f"enrichment produced no keywords for {obj.pid}")
    enriched = EnrichedMetadata(
        summary=summary,
        hypothetical_questions=tuple(questions),
        classification_labels=frozenset(labels),
        keywords=frozenset(keywords),
        refinement_highlights=tuple(refinement_highlights),
        enrichment_provenance=f"model={gateway.config.model}",
    )
    store.attach_enrichment(obj.pid, enriched)
    return enriched


def describe_nontextual(obj: DigitalObject, gateway, store: ObjectStore) -> str:
    """Generate and attach a multimodal description for image/audio objects."""
    if obj.kind not in ("image", "audio"):
        raise ValueError(f"describe_nontextual requires image or audio, got {obj.kind}")
    response = gateway.complete(
        GatewayRequest(
            "describe_media",
            {
                "kind": obj.kind,
                "byte_length": obj.payload_ref.length,
                "title": obj.explicit_meta.title,
            },
        )
    )
    description = response["description"]
    if not description:
        raise GatewayError(f"empty multimodal description for {obj.pid}")
    keywords = gateway.complete(GatewayRequest("keywords", {"text": description}))["keywords"]
    enriched = EnrichedMetadata(
        summary=description,
        hypothetical_questions=(),
        classification_labels=frozenset({obj.kind}),
        keywords=frozenset(keywords),
        multimodal_description=description,
        enrichment_provenance=f"model={gateway.config.model}",
    )
    store.attach_enrichment(obj.pid, enriched)
    return description
