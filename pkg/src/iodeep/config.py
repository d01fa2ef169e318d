"""Configuration: a small TOML file (``iod.toml`` by convention) plus
``IOD_*`` environment overrides for the gateway."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from iodeep.gateway import DEFAULT_EMBED_DIM, GatewayConfig


@dataclass(frozen=True)
class IngestionConfig:
    max_chunk_chars: int = 2000
    overlap_chars: int = 200
    sentence_snap: bool = True
    external_parser: str | None = None
    parallelism: int = 4


@dataclass(frozen=True)
class IndexConfig:
    embed_nodes: bool = False
    embed_dim: int = DEFAULT_EMBED_DIM


@dataclass(frozen=True)
class AgentConfig:
    max_refine_iterations: int = 3
    min_context_items: int = 3
    max_steps: int = 8
    max_check_cycles: int = 2
    force_report_mode: bool = False


@dataclass(frozen=True)
class RetrievalConfig:
    max_hops: int = 2
    top_k: int = 10


@dataclass(frozen=True)
class Config:
    data_dir: str = "data"
    ingestion: IngestionConfig = IngestionConfig()
    index: IndexConfig = IndexConfig()
    agents: AgentConfig = AgentConfig()
    retrieval: RetrievalConfig = RetrievalConfig()
    gateway: GatewayConfig = field(default_factory=GatewayConfig.from_env)


def load_config(path: str | Path | None = None) -> Config:
    """Load the config file if given/present, then apply env overrides."""
    raw: dict = {}
    if path is not None:
        raw = tomllib.loads(Path(path).read_text("utf-8"))
    base = Config()
    ing = raw.get("ingestion", {})
    idx = raw.get("index", {})
    ag = raw.get("agents", {})
    ret = raw.get("retrieval", {})
    gw = raw.get("gateway", {})
    gateway = GatewayConfig.from_env()
    gateway = replace(
        gateway,
        endpoint=gw.get("endpoint", gateway.endpoint),
        model=gw.get("model", gateway.model),
        timeout_s=gw.get("timeout_s", gateway.timeout_s),
        max_retries=gw.get("max_retries", gateway.max_retries),
        parallelism=gw.get("parallelism", gateway.parallelism),
        mock=gw.get("mock", gateway.mock),
        embed_dim=gw.get("embed_dim", gateway.embed_dim),
        prompts_dir=gw.get("prompts_dir", gateway.prompts_dir),
    )
    return Config(
        data_dir=raw.get("data_dir", base.data_dir),
        ingestion=IngestionConfig(
            max_chunk_chars=ing.get("max_chunk_chars", base.ingestion.max_chunk_chars),
            overlap_chars=ing.get("overlap_chars", base.ingestion.overlap_chars),
            sentence_snap=ing.get("sentence_snap", base.ingestion.sentence_snap),
            external_parser=ing.get("external_parser", base.ingestion.external_parser),
            parallelism=ing.get("parallelism", base.ingestion.parallelism),
        ),
        index=IndexConfig(
            embed_nodes=idx.get("embed_nodes", base.index.embed_nodes),
            embed_dim=idx.get("embed_dim", gateway.embed_dim),
        ),
        agents=AgentConfig(
            max_refine_iterations=ag.get("max_refine_iterations", base.agents.max_refine_iterations),
            min_context_items=ag.get("min_context_items", base.agents.min_context_items),
            max_steps=ag.get("max_steps", base.agents.max_steps),
            max_check_cycles=ag.get("max_check_cycles", base.agents.max_check_cycles),
            force_report_mode=ag.get("force_report_mode", base.agents.force_report_mode),
        ),
        retrieval=RetrievalConfig(
            max_hops=ret.get("max_hops", base.retrieval.max_hops),
            top_k=ret.get("top_k", base.retrieval.top_k),
        ),
        gateway=gateway,
    )
