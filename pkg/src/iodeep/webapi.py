"""HTTP session API: create/confirm/clarify research sessions, stream their
events as server-sent events (with Last-Event-ID replay), search the index,
and fetch objects and reports.

Sessions live in memory with an append-only event log file per session for
crash inspection; one background thread runs each confirmed session.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from pydantic import BaseModel

from iodeep.agents import (
    ClarificationRequest,
    PlanRejected,
    _execute_confirmed,
    confirm_plan,
    plan as make_plan,
    plan_to_record,
    render_markdown,
    step_from_record,
    _known_terms,
    _fail,
)
from iodeep.config import Config
from iodeep.errors import NotFoundError, PidError, QueryError
from iodeep.pids import parse_pid
from iodeep.search import Filters, RetrievalQuery, item_to_record
from iodeep.session import Session
from iodeep.store import object_to_record

TERMINAL_STATES = {"done", "failed"}
SSE_POLL_SECONDS = 0.05


class SessionManager:
    def __init__(self, corpus, gateway, config: Config, log_dir: Path | None = None):
        self.corpus = corpus
        self.gateway = gateway
        self.config = config
        self.log_dir = Path(log_dir) if log_dir else None
        if self.log_dir:
            self.log_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def _new_session(self, query: str) -> Session:
        session = Session(query=query)
        if self.log_dir:
            session.log_path = self.log_dir / f"{session.id}.events.jsonl"
        with self._lock:
            self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"unknown session {session_id}")
        return session

    def start(self, query: str) -> Session:
        session = self._new_session(query)
        self._propose(session, query)
        return session

    def _propose(self, session: Session, effective_query: str):
        try:
            outcome = make_plan(
                effective_query,
                self.gateway,
                known_terms=_known_terms(self.corpus),
                retrieval_defaults={"top_k": self.config.retrieval.top_k},
            )
        except Exception as exc:  # noqa: BLE001
            _fail(session, exc)
            return
        if session.state == "created":
            session.transition("planned")
        session.transition("awaiting_user")
        if isinstance(outcome, ClarificationRequest):
            session.clarification = outcome
            session.emit(
                "clarification_needed",
                {"question": outcome.question, "missing": list(outcome.missing)},
            )
        else:
            session.plan = outcome
            session.clarification = None
            session.emit("plan_proposed", {"plan": plan_to_record(outcome)})

    def clarify(self, session_id: str, answer: str) -> Session:
        session = self.get(session_id)
        if session.state != "awaiting_user" or session.clarification is None:
            raise InvalidState(f"session {session_id} is not awaiting clarification")
        # replanning folds the answer into the original query
        session.transition("planned")
        session.clarification = None
        self._propose(session, f"{session.query} {answer}".strip())
        return session

    def confirm(self, session_id: str, steps: Optional[list[dict]] = None) -> Session:
        session = self.get(session_id)
        if session.state != "awaiting_user" or session.plan is None:
            raise InvalidState(f"session {session_id} has no plan awaiting confirmation")
        edits = [step_from_record(rec) for rec in steps] if steps is not None else None
        confirm_plan(session.plan, edits)  # PlanRejected -> 400
        session.transition("confirmed")
        session.emit("plan_confirmed", {"plan": plan_to_record(session.plan)})
        worker = threading.Thread(target=self._run, args=(session,), daemon=True)
        worker.start()
        return session

    def _run(self, session: Session):
        try:
            session.transition("running")
            _execute_confirmed(session, self.corpus, self.gateway, self.config)
        except Exception as exc:  # noqa: BLE001
            if session.state != "failed":
                _fail(session, exc)


class InvalidState(Exception):
    pass


class SessionCreate(BaseModel):
    query: str


class ClarifyBody(BaseModel):
    answer: str


class ConfirmBody(BaseModel):
    steps: Optional[list[dict]] = None


class SearchBody(BaseModel):
    text: str
    tier: str = "chunk"
    strategy: str = "hybrid"
    top_k: int = 10
    filters: Optional[dict] = None


def create_app(
    corpus,
    gateway,
    config: Config = Config(),
    static_dir: Path | None = None,
    log_dir: Path | None = None,
) -> FastAPI:
    app = FastAPI(title="iodeep", version="0.1.0")
    manager = SessionManager(corpus, gateway, config, log_dir=log_dir)
    app.state.manager = manager

    @app.exception_handler(NotFoundError)
    async def _not_found(_req: Request, exc: NotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(InvalidState)
    async def _conflict(_req: Request, exc: InvalidState):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(PlanRejected)
    async def _rejected(_req: Request, exc: PlanRejected):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.post("/sessions")
    def create_session(body: SessionCreate):
        if not body.query.strip():
            return JSONResponse(status_code=400, content={"detail": "query must be non-empty"})
        session = manager.start(body.query)
        return {"session_id": session.id, "state": session.state}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return manager.get(session_id).snapshot()

    @app.post("/sessions/{session_id}/clarify")
    def clarify(session_id: str, body: ClarifyBody):
        session = manager.clarify(session_id, body.answer)
        return {"session_id": session.id, "state": session.state}

    @app.post("/sessions/{session_id}/confirm")
    def confirm(session_id: str, body: ConfirmBody | None = None):
        steps = body.steps if body is not None else None
        session = manager.confirm(session_id, steps)
        return {"session_id": session.id, "state": session.state}

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, request: Request):
        session = manager.get(session_id)
        last_id = request.headers.get("Last-Event-ID") or request.query_params.get("last_event_id") or "0"
        try:
            since = int(last_id)
        except ValueError:
            since = 0

        def stream():
            cursor = since
            while True:
                for event in session.events_since(cursor):
                    cursor = event.seq
                    payload = json.dumps(
                        {"kind": event.kind, "payload": event.payload}, ensure_ascii=False
                    )
                    yield f"id: {event.seq}\nevent: {event.kind}\ndata: {payload}\n\n"
                if session.state in TERMINAL_STATES or session.state == "awaiting_user":
                    break
                time.sleep(SSE_POLL_SECONDS)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/search")
    def search(body: SearchBody):
        filters_raw = body.filters or {}
        try:
            query = RetrievalQuery(
                text=body.text,
                tier=body.tier,
                strategy=body.strategy,
                top_k=body.top_k,
                filters=Filters(
                    domain=filters_raw.get("domain"),
                    after=filters_raw.get("after"),
                    before=filters_raw.get("before"),
                    kinds=frozenset(filters_raw["kinds"]) if "kinds" in filters_raw else None,
                    source_allowlist=(
                        frozenset(filters_raw["source_allowlist"])
                        if "source_allowlist" in filters_raw
                        else None
                    ),
                ),
            )
            items = corpus.retriever.search(query)
        except QueryError as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        return {"items": [item_to_record(item) for item in items]}

    @app.get("/objects/{pid:path}")
    def get_object(pid: str):
        try:
            obj = corpus.store.get(parse_pid(pid))
        except PidError as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        return {"object": object_to_record(obj)}

    @app.get("/reports/{session_id}")
    def get_report(session_id: str):
        session = manager.get(session_id)
        if session.report is None:
            raise NotFoundError(f"session {session_id} has no report yet")
        return PlainTextResponse(render_markdown(session.report), media_type="text/markdown")

    @app.post("/rpc")
    def rpc(request_body: dict):
        from iodeep.rpc import ToolServer

        server = getattr(app.state, "tool_server", None)
        if server is None:
            server = ToolServer(corpus)
            app.state.tool_server = server
        response = server.handle(request_body)
        return response if response is not None else Response(status_code=204)

    if static_dir is not None and Path(static_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
