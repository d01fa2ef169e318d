"""Research session state machine and its append-only event log.

Transitions: created -> planned -> awaiting_user -> confirmed -> running ->
(reporting -> done | failed). A proposed plan or clarification always parks
the session in awaiting_user; nothing skips that state.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

STATES = (
    "created",
    "planned",
    "awaiting_user",
    "confirmed",
    "running",
    "reporting",
    "done",
    "failed",
)

_ALLOWED = {
    "created": {"planned", "failed"},
    "planned": {"awaiting_user", "failed"},
    "awaiting_user": {"confirmed", "planned", "failed"},
    "confirmed": {"running", "failed"},
    "running": {"reporting", "failed"},
    "reporting": {"done", "failed"},
    "done": set(),
    "failed": set(),
}

EVENT_KINDS = (
    "plan_proposed",
    "clarification_needed",
    "plan_confirmed",
    "step_started",
    "step_completed",
    "check_finding",
    "report_ready",
    "failed",
)


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    kind: str
    payload: dict

    def to_record(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "payload": self.payload}


class InvalidTransition(Exception):
    pass


@dataclass
class Session:
    query: str
    id: str = field(default_factory=lambda: str(uuid.uuid4()))
    state: str = "created"
    plan: Optional[object] = None
    report: Optional[object] = None
    clarification: Optional[object] = None
    events: list[SessionEvent] = field(default_factory=list)
    failure: Optional[str] = None
    log_path: Optional[Path] = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def transition(self, new_state: str):
        with self._lock:
            if new_state not in _ALLOWED.get(self.state, set()):
                raise InvalidTransition(f"cannot move {self.state} -> {new_state}")
            self.state = new_state

    def emit(self, kind: str, payload: dict) -> SessionEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._lock:
            event = SessionEvent(seq=len(self.events) + 1, kind=kind, payload=payload)
            self.events.append(event)
            if self.log_path is not None:
                with self.log_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event.to_record(), ensure_ascii=False))
                    fh.write("\n")
        return event

    def events_since(self, seq: int) -> list[SessionEvent]:
        """Events with sequence number strictly greater than ``seq``."""
        with self._lock:
            return [e for e in self.events if e.seq > seq]

    def snapshot(self) -> dict:
        from iodeep.agents import plan_to_record, report_to_record

        with self._lock:
            return {
                "session_id": self.id,
                "query": self.query,
                "state": self.state,
                "plan": plan_to_record(self.plan) if self.plan is not None else None,
                "clarification": (
                    {
                        "question": self.clarification.question,
                        "missing": list(self.clarification.missing),
                    }
                    if self.clarification is not None
                    else None
                ),
                "report": report_to_record(self.report) if self.report is not None else None,
                "events": [e.to_record() for e in self.events],
                "failure": self.failure,
            }
