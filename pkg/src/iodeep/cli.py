"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from iodeep.config import Config, load_config


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="iodeep", description="Deep research over an internet-of-data registry")
    parser.add_argument("--config", help="path to the iod.toml-style config file")
    parser.add_argument("--data-dir", help="data root (default from config, else ./data)")
    sub = parser.add_subparsers(dest="command")

    p_ingest = sub.add_parser("ingest", help="parse and register a directory of files")
    p_ingest.add_argument("directory")
    p_ingest.add_argument("--domain", required=True)

    sub.add_parser("index", help="refine the registered corpus and build the index")

    p_search = sub.add_parser("search", help="query the built index")
    p_search.add_argument("text")
    p_search.add_argument("--tier", default="object", choices=["object", "chunk", "fine"])
    p_search.add_argument("--strategy", default="hybrid", choices=["keyword", "vector", "graph", "hybrid"])
    p_search.add_argument("--k", type=int, default=10)

    p_ask = sub.add_parser("ask", help="answer a question with a cited direct answer")
    p_ask.add_argument("question")

    p_report = sub.add_parser("report", help="write a cited research report on a topic")
    p_report.add_argument("topic")

    p_bench = sub.add_parser("bench", help="run one benchmark task over a dataset file")
    p_bench.add_argument("task", type=int, choices=[1, 2, 3])
    p_bench.add_argument("dataset")
    p_bench.add_argument("--k", type=int, default=5)
    p_bench.add_argument("--out", help="write the MetricReport (json + rendered table)")

    p_gen = sub.add_parser("gen", help="generate a seeded synthetic corpus and task files")
    p_gen.add_argument("out_dir")
    p_gen.add_argument("--seed", type=int, default=42)
    p_gen.add_argument("--domains", default="materials,law,geoscience")
    p_gen.add_argument("--docs", type=int, default=10)
    p_gen.add_argument("--questions", type=int, default=20)

    p_serve = sub.add_parser("serve", help="serve the HTTP session API and/or the stdio tool server")
    p_serve.add_argument("--http", metavar="ADDR", help="host:port for the HTTP API")
    p_serve.add_argument("--tools", action="store_true", help="serve JSON-RPC tools on stdio")
    p_serve.add_argument("--static", help="directory with the built web UI")

    return parser


def _load(args) -> Config:
    config = load_config(args.config)
    if args.data_dir:
        from dataclasses import replace

        config = replace(config, data_dir=args.data_dir)
    return config


def _corpus(config: Config):
    from iodeep.gateway import make_gateway
    from iodeep.pipeline import load_corpus

    gateway = make_gateway(config.gateway)
    return load_corpus(Path(config.data_dir), gateway, config), gateway


def _cmd_ingest(args, config: Config) -> int:
    from iodeep.pipeline import ingest_dir
    from iodeep.store import ObjectStore

    store = ObjectStore(Path(config.data_dir))
    report = ingest_dir(store, Path(args.directory), args.domain, config)
    for line in report.skipped:
        print(f"skipped {line}", file=sys.stderr)
    print(f"registered {len(report.registered)} objects, {report.chunks} chunks")
    return 0


def _cmd_index(args, config: Config) -> int:
    from iodeep.gateway import make_gateway
    from iodeep.pipeline import refine_and_index
    from iodeep.store import ObjectStore

    store = ObjectStore(Path(config.data_dir))
    gateway = make_gateway(config.gateway)
    corpus = refine_and_index(store, gateway, config, data_dir=Path(config.data_dir))
    print(
        f"indexed {len(store)} objects: "
        f"{corpus.kg.node_count()} nodes, {corpus.kg.edge_count()} edges, "
        f"{len(corpus.facts)} facts, {len(corpus.embeddings)} embeddings"
    )
    return 0


def _cmd_search(args, config: Config) -> int:
    from iodeep.search import RetrievalQuery

    corpus, _gateway = _corpus(config)
    items = corpus.retriever.search(
        RetrievalQuery(text=args.text, tier=args.tier, strategy=args.strategy, top_k=args.k)
    )
    for item in items:
        print(f"{item.provenance[-1].key}\t{item.score:.6f}\t{item.ref}")
    return 0


def _cmd_ask(args, config: Config) -> int:
    from iodeep.agents import ClarificationNeeded, render_markdown, run_research
    from iodeep.session import Session

    corpus, gateway = _corpus(config)
    session = Session(query=args.question)
    try:
        report = run_research(args.question, session, corpus, gateway, config)
    except ClarificationNeeded as exc:
        print(f"clarification needed: {exc.request.question}")
        return 0
    print(render_markdown(report))
    return 0


def _cmd_report(args, config: Config) -> int:
    from dataclasses import replace

    from iodeep.agents import ClarificationNeeded, render_markdown, run_research
    from iodeep.session import Session

    corpus, gateway = _corpus(config)
    config = replace(config, agents=replace(config.agents, force_report_mode=True))
    session = Session(query=args.topic)
    try:
        report = run_research(args.topic, session, corpus, gateway, config)
    except ClarificationNeeded as exc:
        print(f"clarification needed: {exc.request.question}")
        return 0
    print(render_markdown(report))
    return 0


def _cmd_bench(args, config: Config) -> int:
    from iodeep.bench import ResearchSystem, run_task

    corpus, gateway = _corpus(config)
    system = ResearchSystem(corpus, gateway, config)
    report = run_task(
        args.task,
        Path(args.dataset),
        system,
        k=args.k,
        out_path=Path(args.out) if args.out else None,
    )
    print(report.render_table())
    return 0


def _cmd_gen(args, config: Config) -> int:
    from iodeep.bench import SynthSpec, gen_synthetic

    spec = SynthSpec(
        domains=tuple(d.strip() for d in args.domains.split(",") if d.strip()),
        docs_per_domain=args.docs,
        questions=args.questions,
    )
    result = gen_synthetic(args.seed, spec, Path(args.out_dir))
    print(
        f"generated {result['documents']} documents under {result['corpus_dir']} "
        f"(+ task1/2/3 files)"
    )
    return 0


def _cmd_serve(args, config: Config) -> int:
    corpus, gateway = _corpus(config)
    if args.tools and not args.http:
        from iodeep.rpc import ToolServer, serve_stdio

        serve_stdio(ToolServer(corpus))
        return 0
    if args.http:
        import uvicorn

        from iodeep.webapi import create_app

        host, _, port = args.http.rpartition(":")
        app = create_app(
            corpus,
            gateway,
            config,
            static_dir=Path(args.static) if args.static else None,
            log_dir=Path(config.data_dir) / "sessions",
        )
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
        return 0
    raise _UsageError("serve requires --http ADDR and/or --tools")


_COMMANDS = {
    "ingest": _cmd_ingest,
    "index": _cmd_index,
    "search": _cmd_search,
    "ask": _cmd_ask,
    "report": _cmd_report,
    "bench": _cmd_bench,
    "gen": _cmd_gen,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        config = _load(args)
        return _COMMANDS[args.command](args, config)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
