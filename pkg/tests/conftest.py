"""Shared fixtures: mock gateway, tiny corpora, and a network guard."""

from __future__ import annotations

import socket

import pytest

from iodeep.config import Config
from iodeep.gateway import GatewayConfig, MockGateway
from iodeep.pipeline import ingest_dir, refine_and_index
from iodeep.store import ObjectStore


@pytest.fixture()
def gateway() -> MockGateway:
    return MockGateway(GatewayConfig())


@pytest.fixture()
def config() -> Config:
    return Config()


@pytest.fixture()
def no_network(monkeypatch):
    """Any attempt to open a socket fails the test."""

    def _blocked(*args, **kwargs):
        raise AssertionError("network access attempted in mock mode")

    monkeypatch.setattr(socket, "socket", _blocked)
    monkeypatch.setattr(socket, "create_connection", _blocked)


def write_docs(directory, docs: dict[str, str], manifest: list[dict] | None = None):
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in docs.items():
        (directory / name).write_text(text, encoding="utf-8")
    if manifest:
        import json

        (directory / "manifest.jsonl").write_text(
            "\n".join(json.dumps(entry, sort_keys=True) for entry in manifest) + "\n",
            encoding="utf-8",
        )


TI_DOCS = {
    "ti.txt": (
        "Ti3SiC2 is a MAX phase. The melting point of Ti3SiC2 is 3200K. "
        "Machinable ceramics interest turbine designers."
    ),
    "aspirin.txt": (
        "Aspirin is a common analgesic. Aspirin typical dosage is 300 mg. "
        "Pharmacists stock it widely."
    ),
    "granite.txt": (
        "Granite is a plutonic rock. The density of granite is 2.7 g/cm3. "
        "Quarries report stable output."
    ),
}

TI_MANIFEST = [
    {
        "file": "ti.txt",
        "title": "Ti3SiC2 notes",
        "domain": "materials",
        "timestamp": "2024-01-01T00:00:00+00:00",
        "source": "fixture://materials/ti",
        "labels": ["materials"],
    },
    {
        "file": "aspirin.txt",
        "title": "Aspirin notes",
        "domain": "pharma",
        "timestamp": "2024-01-02T00:00:00+00:00",
        "source": "fixture://pharma/aspirin",
        "labels": ["pharma"],
    },
    {
        "file": "granite.txt",
        "title": "Granite notes",
        "domain": "geology",
        "timestamp": "2024-01-03T00:00:00+00:00",
        "source": "fixture://geology/granite",
        "labels": ["geology"],
    },
]


@pytest.fixture()
def ti_corpus(tmp_path, gateway, config):
    """Three one-chunk documents across three domains, fully refined."""
    docs_dir = tmp_path / "docs"
    write_docs(docs_dir, TI_DOCS, TI_MANIFEST)
    store = ObjectStore(tmp_path / "data")
    ingest_dir(store, docs_dir, "materials", config)
    return refine_and_index(store, gateway, config, data_dir=tmp_path / "data")
