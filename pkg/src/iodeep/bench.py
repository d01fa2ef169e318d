"""Evaluation harness: retrieval metrics, QA metrics, judged report writing,
and the seeded synthetic corpus generator that stands in for a private
document collection at desk scale.

Dataset files are JSONL (task1/task2/task3); field names are part of the
format contract (docs/bench.md).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from iodeep.config import Config
from iodeep.errors import DatasetError
from iodeep.gateway import JUDGE_DIMENSIONS, GatewayRequest
from iodeep.pids import Pid, digest_payload, mint_pid
from iodeep.search import RetrievalQuery
from iodeep.session import Session
from iodeep.textproc import tokenize
from iodeep.agents import render_markdown, run_research

CONTEXT_MATCH_THRESHOLD = 0.5  # declared Jaccard constant, configurable per call


# ---------------------------------------------------------------------------
# Metrics (all on a 0-100 scale except judge scores, which are 0-10)
# ---------------------------------------------------------------------------

def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both inputs are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def prf1(retrieved: Sequence[Pid | str], relevant: set, k: int) -> tuple[float, float, float]:
    """Precision/recall/F1 over the top-k retrieved pids, on 0-100."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    relevant_text = {str(p) for p in relevant}
    top = [str(p) for p in retrieved[:k]]
    k_eff = min(k, len(top))
    hits = sum(1 for p in top if p in relevant_text)
    precision = 100.0 * hits / k_eff if k_eff else 0.0
    recall = 100.0 * hits / len(relevant_text)
    return precision, recall, f1_score(precision, recall)


def _normalized_tokens(text: str) -> set[str]:
    return set(tokenize(text))


def context_metrics(
    retrieved_contexts: Sequence[str],
    gold_contexts: Sequence[str],
    threshold: float = CONTEXT_MATCH_THRESHOLD,
) -> tuple[float, float, float]:
    """Context precision/recall/F1 with Jaccard-overlap matching (>= threshold)."""
    if not gold_contexts:
        raise ValueError("gold contexts must be non-empty")
    gold_tokens = [_normalized_tokens(g) for g in gold_contexts]
    retrieved_tokens = [_normalized_tokens(r) for r in retrieved_contexts]

    def matches(a: set[str], b: set[str]) -> bool:
        union = a | b
        return bool(union) and len(a & b) / len(union) >= threshold

    matched_retrieved = sum(1 for r in retrieved_tokens if any(matches(r, g) for g in gold_tokens))
    covered_gold = sum(1 for g in gold_tokens if any(matches(r, g) for r in retrieved_tokens))
    precision = 100.0 * matched_retrieved / len(retrieved_tokens) if retrieved_tokens else 0.0
    recall = 100.0 * covered_gold / len(gold_contexts)
    return precision, recall, f1_score(precision, recall)


@dataclass(frozen=True)
class Task1Item:
    question: str
    relevant_pids: frozenset[str]

    def __post_init__(self):
        if not self.relevant_pids:
            raise ValueError("relevant_pids must be non-empty")


@dataclass(frozen=True)
class Task2Item:
    question: str
    gold_answer: str
    gold_contexts: tuple[str, ...]
    hops: str = "single"
    domains: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.gold_contexts:
            raise ValueError("gold_contexts must be non-empty")
        if self.hops not in ("single", "multi"):
            raise ValueError(f"unknown hops value {self.hops!r}")


@dataclass(frozen=True)
class Task3Item:
    topic: str
    domains: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.topic.strip():
            raise ValueError("topic must be non-empty")


def answer_metrics(
    item: Task2Item, answer: str, contexts: Sequence[str], gateway
) -> tuple[float, float, float]:
    """(accuracy, faithfulness, relevance) on 0-100.

    Accuracy: fraction of gold-answer claims found in the answer.
    Faithfulness: fraction of answer claims supported by the contexts.
    Relevance: cosine of question/answer embeddings, clamped at 0.
    """
    if not answer.strip():
        raise ValueError("answer must be non-empty")
    from iodeep.textproc import split_sentences

    gold_claims = split_sentences(item.gold_answer) or [item.gold_answer]
    response = gateway.complete(
        GatewayRequest("check_claims", {"claims": gold_claims, "evidence": [answer]})
    )
    matched = sum(1 for f in response["findings"] if f["status"] == "supported")
    accuracy = 100.0 * matched / len(gold_claims)

    answer_claims = split_sentences(answer)
    if answer_claims and contexts:
        response = gateway.complete(
            GatewayRequest("check_claims", {"claims": answer_claims, "evidence": list(contexts)})
        )
        supported = sum(1 for f in response["findings"] if f["status"] == "supported")
        faithfulness = 100.0 * supported / len(answer_claims)
    else:
        faithfulness = 0.0

    q_vec, a_vec = gateway.embed([item.question, answer])
    cosine = float(np.dot(np.asarray(q_vec, dtype=np.float64), np.asarray(a_vec, dtype=np.float64)))
    relevance = 100.0 * max(0.0, min(1.0, cosine))
    return accuracy, faithfulness, relevance


def judge_report(
    report_markdown: str,
    topic: str,
    gateway,
    rubric: Sequence[str] = JUDGE_DIMENSIONS,
    runs: int = 3,
) -> dict:
    """Score a report on the five-dimension rubric, averaged over ``runs``
    independent judge calls at temperature 0."""
    if not rubric:
        raise ValueError("rubric must name at least one dimension")
    per_run: list[dict] = []
    for _ in range(runs):
        response = gateway.complete(
            GatewayRequest(
                "judge", {"report": report_markdown, "topic": topic, "rubric": list(rubric)}
            )
        )
        scores = response["scores"]
        missing = [dim for dim in rubric if dim not in scores]
        if missing:
            raise DatasetError(f"judge reply missing dimensions {missing}")
        per_run.append({dim: float(scores[dim]) for dim in rubric})
    means = {dim: sum(run[dim] for run in per_run) / runs for dim in rubric}
    means["mean"] = sum(means[dim] for dim in rubric) / len(rubric)
    means["runs"] = per_run
    return means


# ---------------------------------------------------------------------------
# Metric report
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    task: int
    rows: list[dict]
    aggregates: dict
    config: dict

    def to_record(self) -> dict:
        return {
            "task": self.task,
            "config": self.config,
            "aggregates": self.aggregates,
            "rows": self.rows,
        }

    def render_table(self) -> str:
        if not self.aggregates:
            return "(no results)"
        headers = list(self.aggregates)
        widths = [max(len(h), 8) for h in headers]
        lines = [
            " | ".join(h.ljust(w) for h, w in zip(headers, widths)),
            "-|-".join("-" * w for w in widths),
            " | ".join(
                f"{self.aggregates[h]:.2f}".ljust(w) if isinstance(self.aggregates[h], float)
                else str(self.aggregates[h]).ljust(w)
                for h, w in zip(headers, widths)
            ),
        ]
        return "\n".join(lines)

    def save(self, path: Path):
        path = Path(path)
        path.write_text(
            json.dumps(self.to_record(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        path.with_suffix(".txt").write_text(self.render_table() + "\n", encoding="utf-8")


def _aggregate(rows: list[dict], keys: Sequence[str]) -> dict:
    agg = {}
    for key in keys:
        values = [row[key] for row in rows]
        agg[key] = sum(values) / len(values) if values else 0.0
    return agg


# ---------------------------------------------------------------------------
# Dataset parsing
# ---------------------------------------------------------------------------

def _load_jsonl(path: Path) -> list[tuple[int, dict]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON: {exc}", line=lineno)
    return out


def load_task1(path: Path) -> list[Task1Item]:
    items = []
    for lineno, rec in _load_jsonl(path):
        try:
            items.append(
                Task1Item(question=rec["question"], relevant_pids=frozenset(rec["relevant_pids"]))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(str(exc), line=lineno, field=_field_of(exc))
    return items


def load_task2(path: Path) -> list[Task2Item]:
    items = []
    for lineno, rec in _load_jsonl(path):
        try:
            items.append(
                Task2Item(
                    question=rec["question"],
                    gold_answer=rec["gold_answer"],
                    gold_contexts=tuple(rec["gold_contexts"]),
                    hops=rec.get("hops", "single"),
                    domains=frozenset(rec.get("domains", ())),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(str(exc), line=lineno, field=_field_of(exc))
    return items


def load_task3(path: Path) -> list[Task3Item]:
    items = []
    for lineno, rec in _load_jsonl(path):
        try:
            items.append(
                Task3Item(topic=rec["topic"], domains=frozenset(rec.get("domains", ())))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(str(exc), line=lineno, field=_field_of(exc))
    return items


def _field_of(exc: Exception) -> str | None:
    return str(exc).strip("'") if isinstance(exc, KeyError) else None


# ---------------------------------------------------------------------------
# System under test
# ---------------------------------------------------------------------------

class ResearchSystem:
    """Adapter the task runners drive: retrieval, QA, and report writing."""

    def __init__(self, corpus, gateway, config: Config = Config()):
        self.corpus = corpus
        self.gateway = gateway
        self.config = config

    def retrieve_objects(self, question: str, k: int) -> list[str]:
        items = self.corpus.retriever.search(
            RetrievalQuery(text=question, tier="object", strategy="hybrid", top_k=k)
        )
        return [item.ref.key for item in items]

    def answer(self, question: str) -> tuple[str, list[str]]:
        session = Session(query=question)
        report = run_research(question, session, self.corpus, self.gateway, self.config)
        answer_text = "\n".join(body for _, body in report.sections)
        contexts = [
            item.snippet
            for step in session.plan.steps
            if step.result is not None
            for item in step.result.accepted_items
        ]
        return answer_text, contexts

    def write(self, topic: str) -> str:
        from dataclasses import replace

        config = replace(
            self.config, agents=replace(self.config.agents, force_report_mode=True)
        )
        session = Session(query=topic)
        report = run_research(topic, session, self.corpus, self.gateway, config)
        return render_markdown(report)


def run_task(
    task_id: int,
    dataset_path: Path,
    system: ResearchSystem,
    *,
    k: int = 5,
    seed: int = 0,
    out_path: Path | None = None,
) -> MetricReport:
    """Evaluate one task file and (optionally) write the MetricReport pair."""
    config_snapshot = {
        "model": system.gateway.config.model,
        "seed": seed,
        "k": k,
    }
    if task_id == 1:
        rows = []
        for item in load_task1(dataset_path):
            retrieved = system.retrieve_objects(item.question, k)
            p, r, f1 = prf1(retrieved, set(item.relevant_pids), k)
            rows.append({"question": item.question, "precision": p, "recall": r, "f1": f1})
        report = MetricReport(
            task=1,
            rows=rows,
            aggregates=_aggregate(rows, ("precision", "recall", "f1")),
            config=config_snapshot,
        )
    elif task_id == 2:
        rows = []
        for item in load_task2(dataset_path):
            answer_text, contexts = system.answer(item.question)
            acc, faith, rel = answer_metrics(item, answer_text, contexts, system.gateway)
            ctx_p, ctx_r, ctx_f1 = context_metrics(contexts, item.gold_contexts)
            rows.append(
                {
                    "question": item.question,
                    "accuracy": acc,
                    "faithfulness": faith,
                    "relevance": rel,
                    "ctx_precision": ctx_p,
                    "ctx_recall": ctx_r,
                    "ctx_f1": ctx_f1,
                }
            )
        report = MetricReport(
            task=2,
            rows=rows,
            aggregates=_aggregate(
                rows,
                ("accuracy", "faithfulness", "relevance", "ctx_precision", "ctx_recall", "ctx_f1"),
            ),
            config=config_snapshot,
        )
    elif task_id == 3:
        rows = []
        for item in load_task3(dataset_path):
            markdown = system.write(item.topic)
            scores = judge_report(markdown, item.topic, system.gateway)
            row = {"topic": item.topic, "mean": scores["mean"]}
            row.update({dim: scores[dim] for dim in JUDGE_DIMENSIONS})
            rows.append(row)
        report = MetricReport(
            task=3,
            rows=rows,
            aggregates=_aggregate(rows, (*JUDGE_DIMENSIONS, "mean")),
            config=config_snapshot,
        )
    else:
        raise ValueError(f"unknown task id {task_id}")
    if out_path is not None:
        report.save(out_path)
    return report


# ---------------------------------------------------------------------------
# Synthetic corpus generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    domains: tuple[str, ...] = ("materials", "law", "geoscience")
    docs_per_domain: int = 10
    questions: int = 20

    def __post_init__(self):
        if not self.domains or self.docs_per_domain < 1 or self.questions < 1:
            raise ValueError("synthetic spec counts must be positive")


_SYLLABLES = (
    "bar", "cor", "dal", "fen", "gor", "hal", "jin", "kel", "lor", "mar",
    "nor", "pel", "quar", "rin", "sol", "tar", "ul", "ven", "wex", "yor", "zan",
)
_PROPERTIES = (
    ("melting point", "K"),
    ("density", "g/cm3"),
    ("hardness", "GPa"),
    ("thermal conductivity", "W/mK"),
    ("half life", "years"),
    ("refractive index", ""),
)
_CATEGORIES = (
    "layered ceramic",
    "binding statute",
    "survey method",
    "crystalline alloy",
    "archival record",
    "field protocol",
)
_FILLERS = (
    "The committee reviewed the measurements during the spring session.",
    "Further replication remains scheduled for the coming quarter.",
    "Archival copies are held by the central repository.",
    "The survey team logged ambient conditions throughout the campaign.",
    "Calibration followed the shared laboratory handbook.",
    "Funding acknowledgements appear in the appendix.",
)

BASE_TIMESTAMP = "2024-01-01T00:00:00+00:00"


@dataclass
class _SynthDoc:
    domain: str
    name: str
    entity: str
    category: str
    prop: str
    unit: str
    value: str
    text: str
    fact_sentence: str
    bridge: Optional[str] = None
    bridge_sentence: Optional[str] = None

    @property
    def pid_text(self) -> str:
        pid = mint_pid(self.domain, digest_payload(self.text.encode("utf-8")))
        return str(pid)


def _make_word(rng: random.Random, used: set[str]) -> str:
    while True:
        word = "".join(rng.choice(_SYLLABLES) for _ in range(3)).capitalize()
        if word.lower() not in used:
            used.add(word.lower())
            return word


def gen_synthetic(seed: int, spec: SynthSpec, out_dir: Path) -> dict:
    """Write a seeded corpus (files + manifest) and the three task files.

    Every gold label is consistent by construction: relevant pids are the
    deterministic pids of the written files, answers quote planted fact
    sentences, and multi-hop items bridge entities planted in two documents.
    """
    rng = random.Random(seed)
    out_dir = Path(out_dir)
    corpus_dir = out_dir / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    used_words: set[str] = set()
    docs: list[_SynthDoc] = []

    for domain in spec.domains:
        for i in range(spec.docs_per_domain):
            entity = _make_word(rng, used_words)
            category = rng.choice(_CATEGORIES)
            prop, unit = rng.choice(_PROPERTIES)
            value = f"{rng.randint(2, 9900)}" if unit else f"{rng.randint(10, 99) / 10:.1f}"
            fact_sentence = (
                f"The {prop} of {entity} is {value} {unit}.".replace("  ", " ").replace(" .", ".")
                if unit
                else f"The {prop} of {entity} is {value}."
            )
            intro = f"{entity} is a {category}."
            fillers = rng.sample(_FILLERS, 3)
            sentences = [intro, fact_sentence, fillers[0], fillers[1], fillers[2]]
            doc = _SynthDoc(
                domain=domain,
                name=f"{domain}_{i:03d}.txt",
                entity=entity,
                category=category,
                prop=prop,
                unit=unit,
                value=value,
                text=" ".join(sentences),
                fact_sentence=fact_sentence,
            )
            docs.append(doc)

    # bridges: pair consecutive domains; a doc carries at most one bridge
    # sentence, and each pair's sentences are frozen here so later pairs
    # cannot corrupt earlier gold contexts
    bridge_pairs: list[dict] = []
    domain_docs = {d: [doc for doc in docs if doc.domain == d] for d in spec.domains}
    if len(spec.domains) >= 2:
        n_bridges = min(spec.docs_per_domain, 5)
        for b in range(n_bridges):
            d1, d2 = spec.domains[b % len(spec.domains)], spec.domains[(b + 1) % len(spec.domains)]
            if d1 == d2:
                continue
            free1 = [doc for doc in domain_docs[d1] if doc.bridge is None]
            free2 = [doc for doc in domain_docs[d2] if doc.bridge is None]
            if not free1 or not free2:
                continue
            doc1 = free1[b % len(free1)]
            doc2 = free2[(b + 1) % len(free2)]
            bridge = _make_word(rng, used_words)
            doc1.bridge = bridge
            doc1.bridge_sentence = f"{doc1.entity} is closely associated with {bridge}."
            doc2.bridge = bridge
            doc2.bridge_sentence = f"The {doc2.prop} of {bridge} is {doc2.value} {doc2.unit}.".replace(
                " .", "."
            )
            bridge_pairs.append(
                {
                    "doc1": doc1,
                    "doc2": doc2,
                    "bridge": bridge,
                    "assoc_sentence": doc1.bridge_sentence,
                    "fact_sentence": doc2.bridge_sentence,
                }
            )

    manifest_lines = []
    for idx, doc in enumerate(docs):
        if doc.bridge_sentence:
            doc.text = f"{doc.text} {doc.bridge_sentence}"
        (corpus_dir / doc.name).write_text(doc.text, encoding="utf-8")
        day = idx + 1
        manifest_lines.append(
            json.dumps(
                {
                    "file": doc.name,
                    "title": f"{doc.entity} reference note",
                    "domain": doc.domain,
                    "timestamp": f"2024-01-{min(day, 28):02d}T00:00:00+00:00",
                    "source": f"synthetic://{doc.domain}/{doc.name}",
                    "labels": [doc.domain, doc.category.replace(" ", "_")],
                },
                ensure_ascii=False,
                sort_keys=True,
            )
        )
    (corpus_dir / "manifest.jsonl").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")

    # Task 1: retrieval questions naming one planted entity each
    task1_lines = []
    pool = list(docs)
    for q in range(spec.questions):
        doc = pool[q % len(pool)]
        task1_lines.append(
            json.dumps(
                {
                    "question": f"Find the reference note about {doc.entity} and its {doc.prop}.",
                    "relevant_pids": [doc.pid_text],
                },
                ensure_ascii=False,
                sort_keys=True,
            )
        )
    (out_dir / "task1.jsonl").write_text("\n".join(task1_lines) + "\n", encoding="utf-8")

    # Task 2: half single-hop, half multi-hop (bridged, cross-domain)
    task2_lines = []
    single_count = (spec.questions + 1) // 2
    for q in range(single_count):
        doc = pool[q % len(pool)]
        task2_lines.append(
            json.dumps(
                {
                    "question": f"What is the {doc.prop} of {doc.entity}?",
                    "gold_answer": doc.fact_sentence,
                    # context granularity matches retrieval: the whole chunk
                    # (here: the document text) that carries the answer
                    "gold_contexts": [doc.text],
                    "hops": "single",
                    "domains": [doc.domain],
                },
                ensure_ascii=False,
                sort_keys=True,
            )
        )
    multi_count = spec.questions - single_count
    for q in range(multi_count):
        if not bridge_pairs:
            break
        pair = bridge_pairs[q % len(bridge_pairs)]
        doc1, doc2 = pair["doc1"], pair["doc2"]
        task2_lines.append(
            json.dumps(
                {
                    "question": f"What is the {doc2.prop} of {pair['bridge']}, the entity associated with {doc1.entity}?",
                    "gold_answer": pair["fact_sentence"],
                    "gold_contexts": [doc1.text, doc2.text],
                    "hops": "multi",
                    "domains": sorted({doc1.domain, doc2.domain}),
                },
                ensure_ascii=False,
                sort_keys=True,
            )
        )
    (out_dir / "task2.jsonl").write_text("\n".join(task2_lines) + "\n", encoding="utf-8")

    # Task 3: report topics, alternating single- and cross-domain
    task3_lines = []
    n_topics = max(2, spec.questions // 4)
    for t in range(n_topics):
        if t % 2 == 0 or not bridge_pairs:
            doc = pool[t % len(pool)]
            topic = f"Overview of {doc.entity} measurements"
            domains = [doc.domain]
        else:
            pair = bridge_pairs[t % len(bridge_pairs)]
            topic = f"Report on {pair['bridge']} across {pair['doc1'].domain} and {pair['doc2'].domain}"
            domains = sorted({pair["doc1"].domain, pair["doc2"].domain})
        task3_lines.append(
            json.dumps({"topic": topic, "domains": domains}, ensure_ascii=False, sort_keys=True)
        )
    (out_dir / "task3.jsonl").write_text("\n".join(task3_lines) + "\n", encoding="utf-8")

    return {
        "corpus_dir": str(corpus_dir),
        "documents": len(docs),
        "task_files": {
            "task1": str(out_dir / "task1.jsonl"),
            "task2": str(out_dir / "task2.jsonl"),
            "task3": str(out_dir / "task3.jsonl"),
        },
        "planted": [
            {
                "file": doc.name,
                "pid": doc.pid_text,
                "entity": doc.entity,
                "fact": doc.fact_sentence,
            }
            for doc in docs
        ],
    }
