"""Object registry: registration, lookup, listing, federation, persistence."""

from __future__ import annotations

import pytest

from iodeep.errors import ConflictError, NotFoundError
from iodeep.store import (
    EnrichedMetadata,
    ObjectStore,
    federate,
    new_object,
    object_from_record,
    object_to_record,
)


def make_doc(store, domain="law", text=b"hello", title="Doc", ts="2024-01-01T00:00:00+00:00"):
    return new_object(
        domain=domain,
        kind="document",
        payload=text,
        store=store,
        title=title,
        source=f"fixture://{domain}/{title}",
        media_type="text/plain",
        timestamp=ts,
    )


def test_register_get_round_trip(tmp_path):
    store = ObjectStore(tmp_path)
    doc = make_doc(store)
    receipt = store.register(doc)
    assert receipt.pid == doc.pid
    assert store.get(doc.pid) == doc


def test_register_is_idempotent(tmp_path):
    store = ObjectStore(tmp_path)
    doc = make_doc(store)
    store.register(doc)
    store.register(doc)
    assert len(store) == 1


def test_same_pid_different_content_conflicts(tmp_path):
    store = ObjectStore(tmp_path)
    doc = make_doc(store)
    store.register(doc)
    import dataclasses

    altered = dataclasses.replace(
        doc, explicit_meta=dataclasses.replace(doc.explicit_meta, title="Other")
    )
    with pytest.raises(ConflictError):
        store.register(altered)


def test_get_unknown_pid_not_found(tmp_path):
    store = ObjectStore(tmp_path)
    doc = make_doc(store)
    with pytest.raises(NotFoundError):
        store.get(doc.pid)


def test_list_domain_counts_and_order(tmp_path):
    store = ObjectStore(tmp_path)
    law = [make_doc(store, "law", f"law{i}".encode(), f"L{i}", f"2024-01-0{i+1}T00:00:00+00:00") for i in range(3)]
    cs = [make_doc(store, "cs", f"cs{i}".encode(), f"C{i}") for i in range(2)]
    for doc in law + cs:
        store.register(doc)
    assert len(store.list_domain("law")) == 3
    assert len(store.list_domain("cs")) == 2
    assert store.list_domain("unknown") == []
    assert store.list_domain("law") == [d.pid for d in law]


def test_order_stable_across_reload(tmp_path):
    store = ObjectStore(tmp_path)
    for i in range(5):
        store.register(make_doc(store, "law", f"doc{i}".encode(), f"D{i}", f"2024-01-0{i+1}T00:00:00+00:00"))
    before = store.list_domain("law")
    reloaded = ObjectStore(tmp_path)
    assert reloaded.list_domain("law") == before


def test_serialize_load_field_for_field(tmp_path):
    store = ObjectStore(tmp_path)
    doc = make_doc(store)
    store.register(doc)
    store.attach_enrichment(
        doc.pid,
        EnrichedMetadata(
            summary="S",
            hypothetical_questions=("Q?",),
            classification_labels=frozenset({"document"}),
            keywords=frozenset({"hello"}),
            enrichment_provenance="model=mock",
        ),
    )
    reloaded = ObjectStore(tmp_path)
    assert reloaded.get(doc.pid) == store.get(doc.pid)


def test_record_round_trip_preserves_fields(tmp_path):
    store = ObjectStore(tmp_path)
    doc = make_doc(store)
    assert object_from_record(object_to_record(doc)) == doc


def test_enrichment_is_one_shot(tmp_path):
    store = ObjectStore(tmp_path)
    doc = make_doc(store)
    store.register(doc)
    meta = EnrichedMetadata(
        summary="S",
        hypothetical_questions=(),
        classification_labels=frozenset({"x"}),
        keywords=frozenset({"k"}),
    )
    store.attach_enrichment(doc.pid, meta)
    store.attach_enrichment(doc.pid, meta)  # same value: idempotent
    other = EnrichedMetadata(
        summary="different",
        hypothetical_questions=(),
        classification_labels=frozenset({"x"}),
        keywords=frozenset({"k"}),
    )
    with pytest.raises(ConflictError):
        store.attach_enrichment(doc.pid, other)


def test_bulk_round_trip_10k(tmp_path):
    store = ObjectStore(tmp_path)
    pids = []
    for i in range(10_000):
        doc = make_doc(store, "bulk", f"payload-{i}".encode(), f"B{i}")
        store.register(doc)
        pids.append(doc.pid)
    assert len(store) == 10_000
    assert len(set(pids)) == 10_000
    for pid in pids[::97]:
        store.get(pid)


def test_federate_singleton_matches_member(tmp_path):
    law = ObjectStore(tmp_path / "law")
    doc = make_doc(law)
    law.register(doc)
    global_view = federate([law])
    assert global_view.get(doc.pid) == law.get(doc.pid)


def test_federate_resolves_across_members(tmp_path):
    law = ObjectStore(tmp_path / "law")
    cs = ObjectStore(tmp_path / "cs")
    d1 = make_doc(law, "law", b"a")
    d2 = make_doc(cs, "cs", b"b")
    law.register(d1)
    cs.register(d2)
    global_view = federate([law, cs])
    assert global_view.get(d1.pid).pid == d1.pid
    assert global_view.get(d2.pid).pid == d2.pid
    assert global_view.domains() == ["cs", "law"]


def test_federate_duplicate_domain_rejected(tmp_path):
    law1 = ObjectStore(tmp_path / "a")
    law2 = ObjectStore(tmp_path / "b")
    law1.register(make_doc(law1, "law", b"a"))
    law2.register(make_doc(law2, "law", b"b"))
    with pytest.raises(ConflictError):
        federate([law1, law2])
    with pytest.raises(ConflictError):
        federate([law1, law1])


def test_chunk_requires_registered_parent(tmp_path):
    store = ObjectStore(tmp_path)
    parent = make_doc(store)
    store.register(parent)
    child = new_object(
        domain="law",
        kind="chunk",
        payload=b"part",
        store=store,
        title="part",
        source="fixture://law/part",
        media_type="text/plain",
        parent=parent,
        ordinal=0,
    )
    store.register(child)
    assert store.get(child.pid).parent == parent.pid

    orphan_parent = make_doc(store, text=b"never registered")
    orphan = new_object(
        domain="law",
        kind="chunk",
        payload=b"stray",
        store=store,
        title="stray",
        source="fixture://law/stray",
        media_type="text/plain",
        parent=orphan_parent,
        ordinal=0,
    )
    with pytest.raises(NotFoundError):
        store.register(orphan)


def test_attach_child_rejects_duplicate_ordinal(tmp_path):
    store = ObjectStore(tmp_path)
    parent = make_doc(store)
    store.register(parent)
    kwargs = dict(
        domain="law", kind="chunk", store=store, title="c", source="s", media_type="text/plain",
        parent=parent,
    )
    c0 = new_object(payload=b"zero", ordinal=0, **kwargs)
    store.register(c0)
    store.attach_child(parent.pid, c0.pid)
    store.attach_child(parent.pid, c0.pid)  # idempotent
    assert store.get(parent.pid).children == (c0.pid,)
