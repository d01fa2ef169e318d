"""The research loop: planning, worker execution, writing, and checking.

One session runs strictly sequentially: plan -> (clarify?) -> confirm ->
steps in dependency order -> write -> check. Search steps iterate
retrieve/filter/refine up to a bounded number of times; the reporter pair
(writer + checker) runs at most two check-rewrite cycles.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from iodeep.config import AgentConfig, Config
from iodeep.errors import IodeepError
from iodeep.gateway import GatewayRequest
from iodeep.pids import Pid, parse_pid
from iodeep.refs import GraphRef, object_ref, parse_ref
from iodeep.search import RetrievalQuery, RetrievedItem
from iodeep.session import Session
from iodeep.textproc import split_sentences, tokenize, top_tokens

INSUFFICIENT_BODY = "No supporting evidence was retrieved."
_MARKER_RE = re.compile(r"\[(\d+)\]")
_INTERROGATIVE = ("what", "which", "who", "whom", "when", "where", "why", "how", "is", "are", "does", "do", "can")


class ClarificationNeeded(IodeepError):
    def __init__(self, request: "ClarificationRequest"):
        super().__init__(request.question)
        self.request = request


class PlanRejected(IodeepError):
    pass


@dataclass(frozen=True)
class ClarificationRequest:
    question: str
    missing: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.question:
            raise ValueError("clarification question must be non-empty")


@dataclass(frozen=True)
class ActionSpec:
    pid: str
    op: str  # describe | aggregate | chart_spec
    column: Optional[str] = None
    agg: Optional[str] = None
    group_by: Optional[str] = None
    chart: Optional[dict] = None


@dataclass(frozen=True)
class StepResult:
    accepted_items: tuple[RetrievedItem, ...]
    evidence_summary: str
    iterations_used: int
    rejected_count: int
    insufficient: bool = False
    action_output: Optional[dict] = None


@dataclass
class PlanStep:
    id: str
    kind: str  # search | action | write
    description: str
    payload: RetrievalQuery | ActionSpec | None = None
    depends_on: frozenset[str] = frozenset()
    status: str = "pending"
    result: Optional[StepResult] = None


@dataclass
class Plan:
    id: str
    query: str
    steps: list[PlanStep]
    status: str = "proposed"


@dataclass(frozen=True)
class CheckFinding:
    claim: str
    status: str  # supported | unsupported | contradicted
    evidence: tuple[GraphRef, ...] = ()

    def __post_init__(self):
        if self.status not in ("supported", "unsupported", "contradicted"):
            raise ValueError(f"unknown finding status {self.status!r}")
        if self.status in ("supported", "contradicted") and not self.evidence:
            raise ValueError(f"{self.status} finding requires evidence refs")


@dataclass
class Report:
    title: str
    sections: list[tuple[str, str]]
    citations: list[tuple[int, Pid, GraphRef]]
    mode: str = "report"
    check_log: list[CheckFinding] = field(default_factory=list)


MAX_PLAN_STEPS = 8


def validate_steps(steps: Sequence[PlanStep]) -> None:
    """Raise PlanRejected with a reason on any invariant violation."""
    if not 1 <= len(steps) <= MAX_PLAN_STEPS:
        raise PlanRejected(f"plan must have 1..{MAX_PLAN_STEPS} steps, got {len(steps)}")
    write_steps = [s for s in steps if s.kind == "write"]
    if len(write_steps) != 1 or steps[-1].kind != "write":
        raise PlanRejected("plan must end with exactly one write step")
    seen: set[str] = set()
    ids = [s.id for s in steps]
    if len(set(ids)) != len(ids):
        raise PlanRejected("duplicate step ids")
    for step in steps:
        if step.kind not in ("search", "action", "write"):
            raise PlanRejected(f"unknown step kind {step.kind!r}")
        for dep in step.depends_on:
            if dep not in seen:
                raise PlanRejected(f"step {step.id} depends on {dep!r} which is not an earlier step")
        if step.kind == "search" and not isinstance(step.payload, RetrievalQuery):
            raise PlanRejected(f"search step {step.id} needs a retrieval query payload")
        if step.kind == "action" and not isinstance(step.payload, ActionSpec):
            raise PlanRejected(f"action step {step.id} needs an action payload")
        seen.add(step.id)


def plan(
    query: str,
    gateway,
    *,
    known_terms: Sequence[str] = (),
    retrieval_defaults: dict | None = None,
) -> Plan | ClarificationRequest:
    """Ask the gateway for a structured plan, or a clarification request when
    the query is too thin to act on."""
    if not query.strip():
        raise ValueError("query must be non-empty")
    response = gateway.complete(
        GatewayRequest("plan", {"query": query, "known_terms": sorted(known_terms)})
    )
    if response.get("clarification"):
        return ClarificationRequest(
            question=response["clarification"],
            missing=tuple(response.get("missing", ())),
        )
    defaults = {"tier": "chunk", "strategy": "hybrid", "top_k": 10}
    defaults.update(retrieval_defaults or {})
    steps: list[PlanStep] = []
    for i, raw in enumerate(response["steps"], start=1):
        step_id = f"s{i}"
        kind = raw["kind"]
        payload = None
        if kind == "search":
            payload = RetrievalQuery(text=raw.get("query", query), **defaults)
        depends = frozenset(s.id for s in steps) if kind == "write" else frozenset()
        steps.append(
            PlanStep(
                id=step_id,
                kind=kind,
                description=raw.get("description", kind),
                payload=payload,
                depends_on=depends,
            )
        )
    result = Plan(id=f"plan-{abs(hash(query)) % 10**8}", query=query, steps=steps)
    validate_steps(result.steps)
    return result


def confirm_plan(plan_obj: Plan, user_edits: Sequence[PlanStep] | None = None) -> Plan:
    """Apply wholesale step edits (if any), validate, and mark confirmed."""
    if plan_obj.status != "proposed":
        raise PlanRejected(f"plan is {plan_obj.status}, expected proposed")
    steps = list(user_edits) if user_edits is not None else plan_obj.steps
    validate_steps(steps)
    plan_obj.steps = steps
    plan_obj.status = "confirmed"
    return plan_obj


# ---------------------------------------------------------------------------
# Worker team
# ---------------------------------------------------------------------------

def execute_search_step(
    step: PlanStep,
    retriever,
    gateway,
    config: AgentConfig = AgentConfig(),
) -> StepResult:
    """Retrieve -> trust filters -> LLM relevance filter; refine the query
    with evidence keywords and reissue while context stays thin."""
    assert isinstance(step.payload, RetrievalQuery)
    query = step.payload
    original_text = query.text  # relevance is judged against the user's intent
    accepted: dict[GraphRef, RetrievedItem] = {}
    rejected_count = 0
    iterations = 0
    for _ in range(config.max_refine_iterations):
        iterations += 1
        items = retriever.search(query)
        response = gateway.complete(
            GatewayRequest(
                "filter_relevance",
                {
                    "query": original_text,
                    "items": [{"id": i, "text": item.snippet} for i, item in enumerate(items)],
                },
            )
        )
        accepted_ids = set(response["accepted"])
        round_accepted = [item for i, item in enumerate(items) if i in accepted_ids]
        rejected_count += len(items) - len(round_accepted)
        for item in round_accepted:
            accepted.setdefault(item.ref, item)
        if len(accepted) >= config.min_context_items:
            break
        extra = _refinement_keywords(query.text, round_accepted or items)
        if extra:
            query = replace(query, text=f"{query.text} {' '.join(extra)}")
    ordered = sorted(accepted.values(), key=lambda it: (-it.score, it.ref.sort_key()))
    summary = ""
    if ordered:
        summary = gateway.complete(
            GatewayRequest(
                "summarize_evidence",
                {"query": step.payload.text, "snippets": [it.snippet for it in ordered]},
            )
        )["summary"]
    return StepResult(
        accepted_items=tuple(ordered),
        evidence_summary=summary,
        iterations_used=iterations,
        rejected_count=rejected_count,
        insufficient=not ordered,
    )


def _refinement_keywords(query_text: str, items: Sequence[RetrievedItem]) -> list[str]:
    """Top keywords of the best-ranked items that are not yet in the query."""
    present = set(tokenize(query_text))
    for item in items[:2]:
        candidates = [t for t in top_tokens(item.snippet, 5) if t not in present]
        if candidates:
            return candidates[:3]
    return []


# -- the safe table tool ------------------------------------------------------

class ActionError(IodeepError):
    pass


def _load_table(store, pid_text: str) -> tuple[list[str], list[list[str]]]:
    obj = store.get(parse_pid(pid_text))
    if obj.kind != "table":
        raise ActionError(f"action target {pid_text} is kind {obj.kind!r}, not table")
    rows = [row for row in csv.reader(io.StringIO(store.object_text(obj))) if row]
    header, data = list(rows[0]), [list(r) for r in rows[1:]]
    return header, data


def _numeric(values: list[str], column: str) -> list[float]:
    out = []
    for v in values:
        try:
            out.append(float(v))
        except ValueError:
            raise ActionError(f"column {column!r} holds non-numeric value {v!r}")
    return out


def execute_action_step(step: PlanStep, store) -> StepResult:
    """Deterministic table operations: describe, aggregate, chart_spec."""
    assert isinstance(step.payload, ActionSpec)
    spec = step.payload
    header, data = _load_table(store, spec.pid)

    def col(name: str) -> list[str]:
        if name not in header:
            raise ActionError(f"unknown column {name!r}; table has {header}")
        idx = header.index(name)
        return [row[idx] for row in data]

    if spec.op == "describe":
        stats = {}
        for name in header:
            values = col(name)
            try:
                nums = _numeric(values, name)
                stats[name] = {
                    "min": min(nums) if nums else None,
                    "max": max(nums) if nums else None,
                    "mean": (sum(nums) / len(nums)) if nums else None,
                }
            except ActionError:
                stats[name] = {"distinct": len(set(values))}
        output = {"op": "describe", "rows": len(data), "cols": len(header), "columns": stats}
    elif spec.op == "aggregate":
        if spec.agg not in ("sum", "mean", "min", "max", "count"):
            raise ActionError(f"unknown aggregate {spec.agg!r}")
        if spec.column is None:
            raise ActionError("aggregate requires a column")
        groups: dict[str, list[str]] = {}
        if spec.group_by:
            keys = col(spec.group_by)
            values = col(spec.column)
            for key, value in zip(keys, values):
                groups.setdefault(key, []).append(value)
        else:
            groups[""] = col(spec.column)
        results = {}
        for key in sorted(groups):
            values = groups[key]
            if spec.agg == "count":
                results[key] = float(len(values))
                continue
            if not values:
                raise ActionError(f"{spec.agg} over empty group {key!r}")
            nums = _numeric(values, spec.column)
            if spec.agg == "sum":
                results[key] = sum(nums)
            elif spec.agg == "mean":
                results[key] = sum(nums) / len(nums)
            elif spec.agg == "min":
                results[key] = min(nums)
            else:
                results[key] = max(nums)
        output = {"op": "aggregate", "agg": spec.agg, "column": spec.column, "groups": results}
        if not spec.group_by:
            output["value"] = results[""]
    elif spec.op == "chart_spec":
        chart = spec.chart or {}
        chart_type = chart.get("type", "bar")
        if chart_type not in ("bar", "line"):
            raise ActionError(f"unsupported chart type {chart_type!r}")
        for fld in ("x_field", "y_field"):
            if chart.get(fld) not in header:
                raise ActionError(f"chart {fld} {chart.get(fld)!r} not among columns {header}")
        output = {
            "op": "chart_spec",
            "chart": {
                "type": chart_type,
                "x_field": chart["x_field"],
                "y_field": chart["y_field"],
                "series": chart.get("series"),
            },
        }
    else:
        raise ActionError(f"unknown action op {spec.op!r}")

    snippet = json.dumps(output, ensure_ascii=False, sort_keys=True)[:500]
    obj = store.get(parse_pid(spec.pid))
    item = RetrievedItem(
        ref=object_ref(obj.pid),
        score=1.0,
        snippet=snippet,
        metadata={
            "type": obj.kind,
            "source": obj.explicit_meta.source,
            "timestamp": obj.explicit_meta.timestamp,
            "domain": obj.explicit_meta.domain,
        },
        provenance=(object_ref(obj.pid),),
    )
    return StepResult(
        accepted_items=(item,),
        evidence_summary=snippet,
        iterations_used=1,
        rejected_count=0,
        action_output=output,
    )


# ---------------------------------------------------------------------------
# Reporter team
# ---------------------------------------------------------------------------

def _is_interrogative(query: str) -> bool:
    tokens = tokenize(query)
    return query.strip().endswith("?") or (bool(tokens) and tokens[0] in _INTERROGATIVE)


def write_report(
    query: str,
    steps: Sequence[PlanStep],
    gateway,
    hetero=None,
    *,
    force_report: bool = False,
) -> Report:
    """Writer node: cited sections from the evidence each step accepted."""
    finished = [s for s in steps if s.kind != "write"]
    if any(s.result is None for s in finished):
        raise IodeepError("write_report requires all non-write steps to be terminal")

    marker_of: dict[Pid, int] = {}
    citations: list[tuple[int, Pid, GraphRef]] = []
    sections_input = []
    evidence_steps = 0
    for step in finished:
        entries = []
        for item in step.result.accepted_items:
            pid = _l1_pid(item)
            if pid not in marker_of:
                marker_of[pid] = len(marker_of) + 1
                citations.append((marker_of[pid], pid, item.ref))
            entries.append({"text": item.snippet, "marker": marker_of[pid]})
        if entries:
            evidence_steps += 1
        sections_input.append({"heading": step.description, "evidence": entries})

    mode = "report"
    if not force_report and _is_interrogative(query) and evidence_steps <= 1:
        mode = "direct_answer"
    response = gateway.complete(
        GatewayRequest(
            "write", {"query": query, "mode": mode, "sections_input": sections_input}
        )
    )
    sections = [(sec["heading"], sec["body"]) for sec in response["sections"]]
    used = {int(m) for _, body in sections for m in _MARKER_RE.findall(body)}
    known = {n for n, _, _ in citations}
    if not used <= known:
        raise IodeepError(f"writer invented citation markers {sorted(used - known)}")
    citations = [c for c in citations if c[0] in used]
    return Report(
        title=response.get("title", query),
        sections=sections,
        citations=citations,
        mode=response.get("mode", mode),
    )


def _l1_pid(item: RetrievedItem) -> Pid:
    tail = item.provenance[-1]
    return parse_pid(tail.key)


def check_report(
    report: Report,
    evidence_items: Sequence[RetrievedItem],
    gateway,
    config: AgentConfig = AgentConfig(),
) -> tuple[Report, list[CheckFinding]]:
    """Checker node: validate claims against the evidence snapshot; rewrite
    (drop unsupported sentences) at most ``max_check_cycles`` times."""
    evidence_texts = [item.snippet for item in evidence_items]
    evidence_refs = tuple(item.ref for item in evidence_items)
    all_findings: list[CheckFinding] = []
    current = report
    for _cycle in range(config.max_check_cycles):
        claims = _claims_of(current)
        if not claims:
            break
        response = gateway.complete(
            GatewayRequest(
                "check_claims",
                {"claims": [c for c, _ in claims], "evidence": evidence_texts},
            )
        )
        cycle_findings = []
        for finding in response["findings"]:
            claim_text, _section = claims[finding["claim_index"]]
            status = finding["status"]
            cycle_findings.append(
                CheckFinding(
                    claim=claim_text,
                    status=status,
                    evidence=evidence_refs if status in ("supported", "contradicted") else (),
                )
            )
        all_findings.extend(f for f in cycle_findings if f.status != "supported")
        bad = {f.claim for f in cycle_findings if f.status != "supported"}
        if not bad:
            break
        current = _rewrite_without(current, bad)
    current.check_log = list(all_findings)
    return current, all_findings


def _claims_of(report: Report) -> list[tuple[str, int]]:
    claims = []
    for idx, (_heading, body) in enumerate(report.sections):
        for sentence in split_sentences(body):
            bare = _MARKER_RE.sub("", sentence).strip()
            if bare and bare != INSUFFICIENT_BODY:
                claims.append((bare, idx))
    return claims


def _rewrite_without(report: Report, bad_claims: set[str]) -> Report:
    """Deterministic rewrite: drop flagged sentences, keep everything else."""
    sections = []
    for heading, body in report.sections:
        kept = []
        for line in body.split("\n"):
            sentences = split_sentences(line)
            kept_line = " ".join(
                s for s in sentences if _MARKER_RE.sub("", s).strip() not in bad_claims
            )
            if kept_line:
                kept.append(kept_line)
        sections.append((heading, "\n".join(kept) if kept else INSUFFICIENT_BODY))
    used = {int(m) for _, body in sections for m in _MARKER_RE.findall(body)}
    citations = [c for c in report.citations if c[0] in used]
    return Report(
        title=report.title,
        sections=sections,
        citations=citations,
        mode=report.mode,
        check_log=report.check_log,
    )


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def run_research(
    query: str,
    session: Session,
    corpus,
    gateway,
    config: Config = Config(),
    *,
    clarification_answerer: Callable[[ClarificationRequest], str] | None = None,
    confirm: Callable[[Plan], Sequence[PlanStep] | None] | None = None,
) -> Report:
    """Drive one session end to end; deterministic under the mock gateway.

    Without an answerer, a clarification request parks the session in
    awaiting_user and raises ClarificationNeeded. ``confirm`` may return
    edited steps; returning None confirms the proposed plan as is.
    """
    try:
        known = _known_terms(corpus)
        effective_query = query
        while True:
            outcome = plan(
                effective_query,
                gateway,
                known_terms=known,
                retrieval_defaults={"top_k": config.retrieval.top_k},
            )
            if isinstance(outcome, ClarificationRequest):
                session.clarification = outcome
                if session.state == "created":
                    session.transition("planned")
                session.transition("awaiting_user")
                session.emit(
                    "clarification_needed",
                    {"question": outcome.question, "missing": list(outcome.missing)},
                )
                if clarification_answerer is None:
                    raise ClarificationNeeded(outcome)
                answer = clarification_answerer(outcome)
                effective_query = f"{query} {answer}".strip()
                session.transition("planned")
                continue
            break
        session.plan = outcome
        if session.state == "created":
            session.transition("planned")
        session.transition("awaiting_user")
        session.emit("plan_proposed", {"plan": plan_to_record(outcome)})

        edits = confirm(outcome) if confirm is not None else None
        confirm_plan(outcome, edits)
        session.transition("confirmed")
        session.emit("plan_confirmed", {"plan": plan_to_record(outcome)})

        session.transition("running")
        return _execute_confirmed(session, corpus, gateway, config)
    except ClarificationNeeded:
        raise
    except Exception as exc:
        _fail(session, exc)
        raise


def _execute_confirmed(session: Session, corpus, gateway, config: Config) -> Report:
    """Run the confirmed plan's steps, then write and check the report."""
    plan_obj: Plan = session.plan
    plan_obj.status = "running"
    for step in plan_obj.steps:
        if step.kind == "write":
            continue
        _require_deps(plan_obj, step)
        session.emit("step_started", {"step_id": step.id, "kind": step.kind})
        step.status = "running"
        if step.kind == "search":
            step.result = execute_search_step(step, corpus.retriever, gateway, config.agents)
        else:
            step.result = execute_action_step(step, corpus.store)
        step.status = "done"
        session.emit(
            "step_completed",
            {
                "step_id": step.id,
                "accepted": len(step.result.accepted_items),
                "rejected": step.result.rejected_count,
                "iterations": step.result.iterations_used,
                "insufficient": step.result.insufficient,
            },
        )
    session.transition("reporting")
    write_step = plan_obj.steps[-1]
    write_step.status = "running"
    report = write_report(
        plan_obj.query,
        plan_obj.steps,
        gateway,
        corpus.graph,
        force_report=config.agents.force_report_mode,
    )
    evidence = [
        item
        for step in plan_obj.steps
        if step.result is not None
        for item in step.result.accepted_items
    ]
    report, findings = check_report(report, evidence, gateway, config.agents)
    for finding in findings:
        session.emit(
            "check_finding", {"claim": finding.claim, "status": finding.status}
        )
    write_step.status = "done"
    plan_obj.status = "done"
    session.report = report
    session.emit("report_ready", {"report": report_to_record(report)})
    session.transition("done")
    return report


def _require_deps(plan_obj: Plan, step: PlanStep):
    by_id = {s.id: s for s in plan_obj.steps}
    for dep in step.depends_on:
        if by_id[dep].status != "done":
            raise IodeepError(f"step {step.id} scheduled before dependency {dep}")


def _fail(session: Session, exc: Exception):
    session.failure = str(exc)
    try:
        session.transition("failed")
    except Exception:
        session.state = "failed"
    session.emit("failed", {"error": str(exc)})


def _known_terms(corpus) -> list[str]:
    terms = set(corpus.store.domains())
    for key in corpus.kg.nodes:
        terms.update(tokenize(key))
    return sorted(terms)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def step_to_record(step: PlanStep) -> dict:
    payload = None
    if isinstance(step.payload, RetrievalQuery):
        payload = {
            "text": step.payload.text,
            "tier": step.payload.tier,
            "strategy": step.payload.strategy,
            "top_k": step.payload.top_k,
        }
    elif isinstance(step.payload, ActionSpec):
        payload = {
            "pid": step.payload.pid,
            "op": step.payload.op,
            "column": step.payload.column,
            "agg": step.payload.agg,
            "group_by": step.payload.group_by,
            "chart": step.payload.chart,
        }
    return {
        "id": step.id,
        "kind": step.kind,
        "description": step.description,
        "payload": payload,
        "depends_on": sorted(step.depends_on),
        "status": step.status,
    }


def step_from_record(rec: dict) -> PlanStep:
    payload = None
    raw = rec.get("payload")
    if rec["kind"] == "search" and raw:
        payload = RetrievalQuery(
            text=raw["text"],
            tier=raw.get("tier", "chunk"),
            strategy=raw.get("strategy", "hybrid"),
            top_k=raw.get("top_k", 10),
        )
    elif rec["kind"] == "action" and raw:
        payload = ActionSpec(
            pid=raw["pid"],
            op=raw["op"],
            column=raw.get("column"),
            agg=raw.get("agg"),
            group_by=raw.get("group_by"),
            chart=raw.get("chart"),
        )
    return PlanStep(
        id=rec["id"],
        kind=rec["kind"],
        description=rec.get("description", rec["kind"]),
        payload=payload,
        depends_on=frozenset(rec.get("depends_on", ())),
        status=rec.get("status", "pending"),
    )


def plan_to_record(plan_obj: Plan) -> dict:
    return {
        "id": plan_obj.id,
        "query": plan_obj.query,
        "status": plan_obj.status,
        "steps": [step_to_record(s) for s in plan_obj.steps],
    }


def report_to_record(report: Report) -> dict:
    return {
        "title": report.title,
        "mode": report.mode,
        "sections": [{"heading": h, "body": b} for h, b in report.sections],
        "citations": [
            {"marker": n, "pid": str(pid), "ref": str(ref)} for n, pid, ref in report.citations
        ],
        "check_log": [
            {"claim": f.claim, "status": f.status, "evidence": [str(r) for r in f.evidence]}
            for f in report.check_log
        ],
    }


def report_from_record(rec: dict) -> Report:
    return Report(
        title=rec["title"],
        mode=rec.get("mode", "report"),
        sections=[(s["heading"], s["body"]) for s in rec["sections"]],
        citations=[
            (c["marker"], parse_pid(c["pid"]), parse_ref(c["ref"])) for c in rec["citations"]
        ],
        check_log=[
            CheckFinding(
                claim=f["claim"],
                status=f["status"],
                evidence=tuple(parse_ref(r) for r in f.get("evidence", ())),
            )
            for f in rec.get("check_log", ())
        ],
    )


def render_markdown(report: Report) -> str:
    """Markdown body with [n] markers plus a citation list."""
    lines = [f"# {report.title}", ""]
    for heading, body in report.sections:
        lines.append(f"## {heading}")
        lines.append("")
        lines.append(body)
        lines.append("")
    if report.citations:
        lines.append("## Citations")
        lines.append("")
        for n, pid, ref in report.citations:
            lines.append(f"[{n}]: {pid} (via {ref})")
        lines.append("")
    return "\n".join(lines)
