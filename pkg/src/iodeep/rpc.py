"""JSON-RPC 2.0 tool server (MCP-style): ``tools/list`` and ``tools/call``
over stdio or HTTP. Tool calls only ever read the index; nothing here
mutates a store.
"""

from __future__ import annotations

import json
import sys
from typing import Any, Optional

import jsonschema

from iodeep.errors import NotFoundError, PidError
from iodeep.pids import parse_pid
from iodeep.refs import parse_ref
from iodeep.search import Filters, RetrievalQuery, item_to_record, list_tools
from iodeep.store import object_to_record

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603

PROTOCOL_VERSION = "2024-11-05"

_TIER_BY_TOOL = {
    "iod.search_objects": "object",
    "iod.search_chunks": "chunk",
    "iod.search_fine": "fine",
}


def _error(msg_id: Any, code: int, message: str, data: Any = None) -> dict:
    err: dict = {"code": code, "message": message}
    if data is not None:
        err["data"] = data
    return {"jsonrpc": "2.0", "id": msg_id, "error": err}


def _result(msg_id: Any, result: Any) -> dict:
    return {"jsonrpc": "2.0", "id": msg_id, "result": result}


class ToolServer:
    """Dispatches JSON-RPC requests against one built corpus index."""

    def __init__(self, corpus):
        self.corpus = corpus
        self._schemas = {tool["name"]: tool["input_schema"] for tool in list_tools()}

    # -- protocol ----------------------------------------------------------

    def handle_line(self, line: str) -> Optional[dict]:
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            return _error(None, PARSE_ERROR, f"parse error: {exc}")
        return self.handle(request)

    def handle(self, request: dict) -> Optional[dict]:
        if not isinstance(request, dict) or request.get("jsonrpc") != "2.0":
            return _error(request.get("id") if isinstance(request, dict) else None,
                          INVALID_REQUEST, "not a JSON-RPC 2.0 request")
        method = request.get("method")
        msg_id = request.get("id")
        is_notification = "id" not in request
        try:
            if method == "initialize":
                response = _result(
                    msg_id,
                    {
                        "protocolVersion": PROTOCOL_VERSION,
                        "capabilities": {"tools": {}},
                        "serverInfo": {"name": "iodeep", "version": "0.1.0"},
                    },
                )
            elif method == "notifications/initialized":
                response = None
            elif method == "tools/list":
                response = _result(msg_id, {"tools": list_tools()})
            elif method == "tools/call":
                response = self._call(msg_id, request.get("params") or {})
            else:
                response = _error(msg_id, METHOD_NOT_FOUND, f"unknown method {method!r}")
        except Exception as exc:  # noqa: BLE001 - anything else is an internal error
            response = _error(msg_id, INTERNAL_ERROR, f"internal error: {exc}")
        return None if is_notification else response

    # -- tools -------------------------------------------------------------

    def _call(self, msg_id: Any, params: dict) -> dict:
        name = params.get("name")
        arguments = params.get("arguments")
        if not isinstance(name, str) or not isinstance(arguments, dict):
            return _error(msg_id, INVALID_PARAMS, "tools/call requires name and arguments")
        schema = self._schemas.get(name)
        if schema is None:
            return _error(msg_id, INVALID_PARAMS, f"unknown tool {name!r}")
        try:
            jsonschema.validate(arguments, schema)
        except jsonschema.ValidationError as exc:
            return _error(msg_id, INVALID_PARAMS, f"invalid params: {exc.message}")
        try:
            data = self._execute(name, arguments)
        except (NotFoundError, PidError, ValueError) as exc:
            return _error(msg_id, INVALID_PARAMS, str(exc))
        except Exception as exc:  # noqa: BLE001
            return _error(msg_id, INTERNAL_ERROR, f"tool failed: {exc}")
        return _result(
            msg_id,
            {
                "content": [
                    {"type": "text", "text": json.dumps(data, ensure_ascii=False, sort_keys=True)}
                ],
                "data": data,
                "isError": False,
            },
        )

    def _execute(self, name: str, arguments: dict) -> dict:
        if name in _TIER_BY_TOOL:
            filters_raw = arguments.get("filters") or {}
            query = RetrievalQuery(
                text=arguments["text"],
                tier=_TIER_BY_TOOL[name],
                strategy=arguments.get("strategy", "hybrid"),
                top_k=arguments.get("top_k", 10),
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
            items = self.corpus.retriever.search(query)
            return {"items": [item_to_record(item) for item in items]}
        if name == "iod.get_object":
            obj = self.corpus.store.get(parse_pid(arguments["pid"]))
            return {"object": object_to_record(obj)}
        if name == "iod.graph_neighbors":
            ref = parse_ref(arguments["ref"])
            refs = self.corpus.graph.neighbors(
                ref,
                arguments.get("link_kind", "semantic"),
                arguments.get("direction", "both"),
            )
            return {"refs": [str(r) for r in refs[: arguments.get("top_k", 10)]]}
        raise ValueError(f"unhandled tool {name!r}")


def serve_stdio(server: ToolServer, stdin=None, stdout=None):
    """Blocking loop: one JSON-RPC message per line; transport errors are
    logged to stderr and the loop continues."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            response = server.handle_line(line)
        except Exception as exc:  # noqa: BLE001
            print(f"tool server error: {exc}", file=sys.stderr)
            continue
        if response is not None:
            stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
            stdout.flush()
