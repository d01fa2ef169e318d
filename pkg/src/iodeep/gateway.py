"""Model gateway: completion and embedding calls behind one abstraction.

Two implementations share the interface: ``HttpGateway`` speaks a
chat-completions-style HTTP endpoint (wire shape in docs/gateway.md), and
``MockGateway`` is a pure function of the request — the documented test
contract the whole suite runs against. Task names drive both the prompt
template and the mock dispatch.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from iodeep import kernels
from iodeep.errors import GatewayError
from iodeep.textproc import (
    content_tokens,
    split_sentences,
    stopwords,
    surface_forms,
    tokenize,
    top_tokens,
    truncate_utf8,
)

TASKS = (
    "summarize",
    "keywords",
    "hypothetical_questions",
    "classify",
    "describe_media",
    "extract_entities",
    "extract_relations",
    "extract_facts",
    "plan",
    "filter_relevance",
    "summarize_evidence",
    "write",
    "check_claims",
    "judge",
)

# Required response keys per task; a reply missing its key is schema-invalid.
RESPONSE_KEYS = {
    "summarize": "summary",
    "keywords": "keywords",
    "hypothetical_questions": "questions",
    "classify": "labels",
    "describe_media": "description",
    "extract_entities": "entities",
    "extract_relations": "relations",
    "extract_facts": "facts",
    "plan": "steps",
    "filter_relevance": "accepted",
    "summarize_evidence": "summary",
    "write": "sections",
    "check_claims": "findings",
    "judge": "scores",
}

JUDGE_DIMENSIONS = (
    "interest_level",
    "coherence_organization",
    "relevance_focus",
    "coverage",
    "breadth_depth",
)

DEFAULT_EMBED_DIM = 64


@dataclass(frozen=True)
class GatewayParams:
    temperature: float = 0.0
    max_output: int = 2048

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output <= 0:
            raise ValueError("max_output must be positive")


@dataclass(frozen=True)
class GatewayRequest:
    task: str
    input: dict
    params: GatewayParams = GatewayParams()

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "judge" and self.params.temperature != 0.0:
            raise ValueError("judge calls must run at temperature 0")


@dataclass
class GatewayConfig:
    endpoint: str = ""
    model: str = "mock"
    api_key_env: str = "IOD_LLM_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 2
    parallelism: int = 4
    mock: bool = True
    embed_dim: int = DEFAULT_EMBED_DIM
    prompts_dir: str = "prompts"

    @classmethod
    def from_env(cls) -> "GatewayConfig":
        mock = os.environ.get("IOD_MOCK", "1") == "1"
        return cls(
            endpoint=os.environ.get("IOD_LLM_ENDPOINT", ""),
            model=os.environ.get("IOD_LLM_MODEL", "mock"),
            mock=mock or not os.environ.get("IOD_LLM_ENDPOINT"),
            embed_dim=int(os.environ.get("IOD_EMBED_DIM", str(DEFAULT_EMBED_DIM))),
        )


@dataclass
class UsageCounters:
    calls: int = 0
    input_units: int = 0
    output_units: int = 0

    def as_dict(self) -> dict:
        return {
            "calls": self.calls,
            "input_units": self.input_units,
            "output_units": self.output_units,
        }


class _UsageMixin:
    def _init_usage(self, parallelism: int):
        self._usage: dict[str, UsageCounters] = {}
        self._usage_lock = threading.Lock()
        self._sem = threading.Semaphore(parallelism)

    def _count(self, task: str, input_payload: Any, output_payload: Any):
        with self._usage_lock:
            counters = self._usage.setdefault(task, UsageCounters())
            counters.calls += 1
            counters.input_units += len(json.dumps(input_payload, ensure_ascii=False))
            counters.output_units += len(json.dumps(output_payload, ensure_ascii=False))

    def usage(self) -> dict[str, dict]:
        """Monotone per-task counters: calls, input units, output units."""
        with self._usage_lock:
            return {task: c.as_dict() for task, c in sorted(self._usage.items())}

    def total_calls(self) -> int:
        with self._usage_lock:
            return sum(c.calls for c in self._usage.values())


def _normalize_unit_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows.astype(np.float64), axis=1, keepdims=True)
    if np.any(norms == 0):
        raise GatewayError("cannot normalize zero vector")
    return (rows / norms).astype(np.float32)


class MockGateway(_UsageMixin):
    """Deterministic gateway: every response is a pure function of the request.

    The dispatch rules are part of the repo's test contract and documented in
    docs/gateway.md; tests hand-compute expected outputs from those rules.
    """

    def __init__(self, config: GatewayConfig | None = None):
        self.config = config or GatewayConfig()
        self._init_usage(self.config.parallelism)

    # -- public interface --------------------------------------------------

    def complete(self, request: GatewayRequest) -> dict:
        with self._sem:
            response = _dispatch_mock(request.task, request.input)
        self._count(request.task, request.input, response)
        return response

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Unit vectors via 64-bit FNV-1a token hashing into ``embed_dim`` buckets."""
        dim = self.config.embed_dim
        vectors: list[np.ndarray] = []
        for text in texts:
            if not text:
                raise GatewayError("cannot embed empty text")
            tokens = [t.encode("utf-8") for t in tokenize(text)]
            if not tokens:
                raise GatewayError(f"no tokens to embed in {text!r}")
            counts = kernels.embed_token_counts(tokens, dim)
            vectors.append(_normalize_unit_rows(counts.reshape(1, -1))[0])
        self._count("embed", list(texts), [len(v) for v in vectors])
        return vectors


class HttpGateway(_UsageMixin):
    """Chat-completions-style HTTP gateway with retries, timeout, and a
    parallelism semaphore. Only this class knows the wire shape."""

    def __init__(self, config: GatewayConfig, transport=None):
        import httpx

        if config.mock:
            raise ValueError("HttpGateway requires mock=False")
        self.config = config
        self._init_usage(config.parallelism)
        self._client = httpx.Client(
            timeout=config.timeout_s,
            transport=transport,
        )
        self._prompts: dict[str, str] = {}

    def close(self):
        self._client.close()

    def _prompt(self, task: str) -> str:
        if task not in self._prompts:
            path = Path(self.config.prompts_dir) / f"{task}.txt"
            if path.exists():
                self._prompts[task] = path.read_text("utf-8")
            else:
                self._prompts[task] = (
                    f"You perform the task '{task}'. Reply with a single JSON object.\n"
                    "Input:\n{input}\n"
                )
        return self._prompts[task]

    def _post(self, body: dict) -> dict:
        import httpx

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last_error: Exception | None = None
        for _attempt in range(self.config.max_retries + 1):
            try:
                resp = self._client.post(self.config.endpoint, json=body, headers=headers)
                resp.raise_for_status()
                return resp.json()
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_error = exc
        raise GatewayError(f"gateway transport failed after retries: {last_error}")

    def complete(self, request: GatewayRequest) -> dict:
        prompt = self._prompt(request.task).replace(
            "{input}", json.dumps(request.input, ensure_ascii=False, sort_keys=True)
        )
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_output,
        }
        with self._sem:
            raw = self._post(body)
        try:
            content = raw["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed completion envelope: {exc}", raw_output=str(raw))
        response = _parse_task_json(request.task, content)
        self._count(request.task, request.input, response)
        return response

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        for text in texts:
            if not text:
                raise GatewayError("cannot embed empty text")
        body = {"model": self.config.model, "input": list(texts)}
        with self._sem:
            raw = self._post(body)
        try:
            rows = np.asarray([item["embedding"] for item in raw["data"]], dtype=np.float64)
        except (KeyError, TypeError) as exc:
            raise GatewayError(f"malformed embedding envelope: {exc}", raw_output=str(raw))
        if rows.ndim != 2 or rows.shape[1] != self.config.embed_dim:
            raise GatewayError(
                f"embedding dimension {rows.shape} != configured {self.config.embed_dim}"
            )
        vectors = [v for v in _normalize_unit_rows(rows)]
        self._count("embed", list(texts), [len(v) for v in vectors])
        return vectors


def _parse_task_json(task: str, content: str) -> dict:
    try:
        parsed = json.loads(content)
    except json.JSONDecodeError as exc:
        raise GatewayError(f"model reply is not JSON: {exc}", raw_output=content)
    if not isinstance(parsed, dict) or RESPONSE_KEYS[task] not in parsed:
        raise GatewayError(
            f"model reply missing key {RESPONSE_KEYS[task]!r} for task {task!r}",
            raw_output=content,
        )
    return parsed


def make_gateway(config: GatewayConfig | None = None):
    config = config or GatewayConfig.from_env()
    if config.mock:
        return MockGateway(config)
    return HttpGateway(config)


# ---------------------------------------------------------------------------
# Mock dispatch rules (documented contract; see docs/gateway.md)
# ---------------------------------------------------------------------------

_IS_A_RE = re.compile(
    r"([A-Z][\w-]*(?:\s+[A-Z][\w-]*)*)\s+is\s+an?\s+([A-Za-z][\w-]*(?:\s+[a-z][\w-]*)*)"
)
_CAP_SPAN_RE = re.compile(r"\b([A-Z][\w-]*(?:\s+[A-Z][\w-]*)*)\b")
_FACT_OF_RE = re.compile(
    r"[Tt]he\s+([a-z][a-z0-9 _-]*?)\s+of\s+([A-Za-z0-9][\w-]*(?:\s+[A-Z][\w-]*)*)\s+is\s+([^.!?\n]+)"
)
_FACT_SUBJ_ATTR_RE = re.compile(
    r"\b([A-Z][\w-]*)\s+((?:[a-z][a-z-]*\s+){0,2}[a-z][a-z-]*)\s+is\s+(\d[\w.]*(?:\s*[A-Za-z%μ][\w/%]*)?)"
)
_FACT_EXPLICIT_RE = re.compile(r"^\s*([^:\n=]+?):\s*([A-Za-z_][\w]*)\s*=\s*(.+?)\s*$")
_VALUE_UNIT_RE = re.compile(r"^(\d+(?:\.\d+)?)\s*([A-Za-z%μΩ°][\w/%]*)?$")


def _dispatch_mock(task: str, payload: dict) -> dict:
    handler = _MOCK_HANDLERS.get(task)
    if handler is None:
        raise GatewayError(f"mock has no handler for task {task!r}")
    return handler(payload)


def _mock_summarize(payload: dict) -> dict:
    sentences = split_sentences(payload.get("text", ""))
    return {"summary": " ".join(sentences[:2])}


def _mock_keywords(payload: dict) -> dict:
    text = payload.get("text", "")
    n = int(payload.get("n", 5))
    forms = surface_forms(text)
    return {"keywords": [forms.get(t, t) for t in top_tokens(text, n)]}


def _mock_questions(payload: dict) -> dict:
    text = payload.get("text", "")
    forms = surface_forms(text)
    return {"questions": [f"What is {forms.get(t, t)}?" for t in top_tokens(text, 3)]}


def _mock_classify(payload: dict) -> dict:
    text = payload.get("text", "")
    kind = payload.get("kind", "document")
    top = top_tokens(text, 1)
    labels = [kind] + top
    return {"labels": labels}


def _mock_describe_media(payload: dict) -> dict:
    kind = payload.get("kind", "image")
    return {
        "description": f"{kind} object, {payload.get('byte_length', 0)} bytes, "
        f"source {payload.get('title', '')}"
    }


def _capitalized_spans(sentence: str) -> list[str]:
    stop = stopwords()
    spans = []
    for m in _CAP_SPAN_RE.finditer(sentence):
        span = m.group(1)
        if span.lower() in stop or span.lower() in {"what", "the"}:
            continue
        spans.append(span)
    return spans


def _entities_of_sentence(sentence: str) -> list[tuple[str, str]]:
    """(name, type) pairs from 'X is a Y' patterns plus capitalized spans."""
    found: list[tuple[str, str]] = []
    seen: set[str] = set()
    for m in _IS_A_RE.finditer(sentence):
        subject, category = m.group(1).strip(), m.group(2).strip()
        if subject.lower() not in seen:
            found.append((subject, category.lower().replace(" ", "_")))
            seen.add(subject.lower())
        if category.lower() not in seen:
            found.append((category, "category"))
            seen.add(category.lower())
    for span in _capitalized_spans(sentence):
        low = span.lower()
        # skip spans subsumed by an already-found entity ("MAX" inside "MAX phase")
        if low in seen or any(low in name for name in seen):
            continue
        found.append((span, "entity"))
        seen.add(low)
    return found


def _thematic_keywords(sentence: str, names: list[str]) -> list[str]:
    """Sentence top tokens minus entity-name tokens: thematic, not nominal."""
    name_tokens = {t for n in names for t in tokenize(n)}
    return [t for t in top_tokens(sentence, 5) if t not in name_tokens][:3]


def _mock_extract_entities(payload: dict) -> dict:
    text = payload.get("text", "")
    entities: list[dict] = []
    seen: set[str] = set()
    for sentence in split_sentences(text):
        found = _entities_of_sentence(sentence)
        names = [name for name, _ in found]
        thematic = _thematic_keywords(sentence, names)
        for name, etype in found:
            if name.lower() in seen:
                continue
            seen.add(name.lower())
            if etype not in ("entity", "category"):
                keywords = [etype.replace("_", " ")]  # the is-a category
            else:
                keywords = thematic or [name.lower()]
            entities.append(
                {
                    "name": name,
                    "type": etype,
                    "keywords": keywords,
                    "description": truncate_utf8(sentence, 400),
                }
            )
    return {"entities": entities}


def _mock_extract_relations(payload: dict) -> dict:
    text = payload.get("text", "")
    relations: list[dict] = []
    seen_pairs: set[frozenset[str]] = set()
    for sentence in split_sentences(text):
        names = [name for name, _ in _entities_of_sentence(sentence)]
        keywords = _thematic_keywords(sentence, names)
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                pair = frozenset({names[i].lower(), names[j].lower()})
                if len(pair) < 2 or pair in seen_pairs:
                    continue
                seen_pairs.add(pair)
                relations.append(
                    {
                        "source": names[i],
                        "target": names[j],
                        "keywords": keywords or ["related"],
                        "description": truncate_utf8(sentence, 400),
                    }
                )
    return {"relations": relations}


def _split_value_unit(raw: str) -> tuple[str, str | None]:
    raw = raw.strip().rstrip(".")
    m = _VALUE_UNIT_RE.match(raw)
    if m:
        return m.group(1), m.group(2)
    return raw, None


def _mock_extract_facts(payload: dict) -> dict:
    text = payload.get("text", "")
    facts: list[dict] = []
    seen: set[tuple] = set()

    def add(subject: str, attribute: str, value: str, unit: str | None):
        key = (subject, attribute, value, unit)
        if not subject or not attribute or key in seen:
            return
        seen.add(key)
        facts.append(
            {
                "subject": subject,
                "attribute": attribute,
                "value": value,
                "unit": unit,
                "confidence": 1.0,
            }
        )

    for line in text.splitlines():
        m = _FACT_EXPLICIT_RE.match(line)
        if m:
            value, unit = _split_value_unit(m.group(3))
            add(m.group(1).strip(), m.group(2).strip(), value, unit)
    for m in _FACT_OF_RE.finditer(text):
        attribute = m.group(1).strip().replace(" ", "_")
        value, unit = _split_value_unit(m.group(3))
        add(m.group(2).strip(), attribute, value, unit)
    for m in _FACT_SUBJ_ATTR_RE.finditer(text):
        attribute = m.group(2).strip().replace(" ", "_")
        if attribute in ("is", "of"):
            continue
        value, unit = _split_value_unit(m.group(3))
        add(m.group(1).strip(), attribute, value, unit)
    return {"facts": facts}


def _mock_plan(payload: dict) -> dict:
    query = payload.get("query", "")
    known_terms = {t.lower() for t in payload.get("known_terms", [])}
    tokens = tokenize(query)
    if len(tokens) < 5 and not (set(tokens) & known_terms):
        return {
            "clarification": (
                "The request is too broad to plan. Which domain and time range "
                "should the research cover?"
            ),
            "missing": ["domain", "time_range"],
            "steps": [],
        }
    return {
        "clarification": None,
        "missing": [],
        "steps": [
            {"kind": "search", "description": f"Search evidence for: {query}", "query": query},
            {"kind": "write", "description": "Write the final report"},
        ],
    }


def _mock_filter_relevance(payload: dict) -> dict:
    query_tokens = set(content_tokens(payload.get("query", ""))) or set(
        tokenize(payload.get("query", ""))
    )
    accepted = []
    for item in payload.get("items", []):
        item_tokens = set(tokenize(item.get("text", "")))
        overlap = len(query_tokens & item_tokens) / len(query_tokens) if query_tokens else 0.0
        if overlap >= 0.2:
            accepted.append(item["id"])
    return {"accepted": accepted}


def _mock_summarize_evidence(payload: dict) -> dict:
    return {"summary": "\n".join(payload.get("snippets", []))}


def _mock_write(payload: dict) -> dict:
    query = payload.get("query", "")
    mode = payload.get("mode", "report")
    sections = []
    for section in payload.get("sections_input", []):
        lines = []
        for entry in section.get("evidence", []):
            marker = entry.get("marker")
            suffix = f" [{marker}]" if marker is not None else ""
            lines.append(f"{entry['text']}{suffix}")
        body = "\n".join(lines) if lines else "No supporting evidence was retrieved."
        sections.append({"heading": section.get("heading", "Findings"), "body": body})
    if not sections:
        sections = [{"heading": "Findings", "body": "No supporting evidence was retrieved."}]
    title = f"Direct answer: {query}" if mode == "direct_answer" else f"Research report: {query}"
    return {"title": title, "mode": mode, "sections": sections}


def _normalize_claim(text: str) -> str:
    return " ".join(tokenize(text))


def _mock_check_claims(payload: dict) -> dict:
    evidence_norm = [_normalize_claim(e) for e in payload.get("evidence", [])]
    findings = []
    for idx, claim in enumerate(payload.get("claims", [])):
        norm = _normalize_claim(claim)
        supported = bool(norm) and any(norm in ev for ev in evidence_norm)
        findings.append(
            {"claim_index": idx, "status": "supported" if supported else "unsupported"}
        )
    return {"findings": findings}


def _mock_judge(payload: dict) -> dict:
    report = payload.get("report", "")
    topic = payload.get("topic", "")
    report_tokens = content_tokens(report)
    distinct = len(set(report_tokens))
    headings = len(re.findall(r"(?m)^#{1,3}\s", report))
    citations = len(set(re.findall(r"\[(\d+)\]", report)))
    topic_tokens = set(content_tokens(topic))
    hit_rate = (
        len(topic_tokens & set(report_tokens)) / len(topic_tokens) if topic_tokens else 0.0
    )
    scores = {
        "interest_level": min(10.0, distinct / 12.0),
        "coherence_organization": min(10.0, 2.0 * headings + (2.0 if report.strip() else 0.0)),
        "relevance_focus": round(10.0 * hit_rate, 4),
        "coverage": min(10.0, 2.0 * citations),
        "breadth_depth": min(10.0, len(report) / 300.0),
    }
    scores = {k: round(v, 4) for k, v in scores.items()}
    return {"scores": scores}


_MOCK_HANDLERS = {
    "summarize": _mock_summarize,
    "keywords": _mock_keywords,
    "hypothetical_questions": _mock_questions,
    "classify": _mock_classify,
    "describe_media": _mock_describe_media,
    "extract_entities": _mock_extract_entities,
    "extract_relations": _mock_extract_relations,
    "extract_facts": _mock_extract_facts,
    "plan": _mock_plan,
    "filter_relevance": _mock_filter_relevance,
    "summarize_evidence": _mock_summarize_evidence,
    "write": _mock_write,
    "check_claims": _mock_check_claims,
    "judge": _mock_judge,
}
