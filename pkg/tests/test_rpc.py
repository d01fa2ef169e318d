"""JSON-RPC tool server conformance."""

from __future__ import annotations

import io
import json

import pytest

from iodeep.rpc import (
    INVALID_PARAMS,
    INVALID_REQUEST,
    METHOD_NOT_FOUND,
    PARSE_ERROR,
    ToolServer,
    serve_stdio,
)


@pytest.fixture()
def server(ti_corpus):
    return ToolServer(ti_corpus)


def rpc(method: str, params=None, msg_id=1) -> dict:
    req = {"jsonrpc": "2.0", "id": msg_id, "method": method}
    if params is not None:
        req["params"] = params
    return req


class TestProtocol:
    def test_initialize_handshake(self, server):
        out = server.handle(rpc("initialize"))
        assert out["result"]["serverInfo"]["name"] == "iodeep"

    def test_tools_list_has_five(self, server):
        out = server.handle(rpc("tools/list"))
        assert len(out["result"]["tools"]) == 5

    def test_unknown_method_32601(self, server):
        out = server.handle(rpc("tools/destroy"))
        assert out["error"]["code"] == METHOD_NOT_FOUND

    def test_missing_required_param_32602(self, server):
        out = server.handle(rpc("tools/call", {"name": "iod.search_chunks", "arguments": {"top_k": 3}}))
        assert out["error"]["code"] == INVALID_PARAMS
        assert "text" in out["error"]["message"]

    def test_unknown_tool_32602(self, server):
        out = server.handle(rpc("tools/call", {"name": "iod.delete_all", "arguments": {}}))
        assert out["error"]["code"] == INVALID_PARAMS

    def test_parse_error_32700(self, server):
        out = server.handle_line("{not json")
        assert out["error"]["code"] == PARSE_ERROR

    def test_invalid_request_32600(self, server):
        out = server.handle({"id": 1, "method": "tools/list"})
        assert out["error"]["code"] == INVALID_REQUEST

    def test_notification_gets_no_response(self, server):
        assert server.handle({"jsonrpc": "2.0", "method": "notifications/initialized"}) is None


class TestToolCalls:
    def test_search_chunks_returns_items(self, server):
        out = server.handle(
            rpc("tools/call", {"name": "iod.search_chunks", "arguments": {"text": "Ti3SiC2 melting"}})
        )
        data = out["result"]["data"]
        assert data["items"]
        first = data["items"][0]
        assert first["ref"].startswith("chunk:")
        assert first["provenance"][-1].startswith("object:")
        # the text content block carries the same serialized payload
        assert json.loads(out["result"]["content"][0]["text"]) == data

    def test_get_object_round_trip(self, ti_corpus, server):
        pid = str(ti_corpus.store.all_objects()[0].pid)
        out = server.handle(rpc("tools/call", {"name": "iod.get_object", "arguments": {"pid": pid}}))
        assert out["result"]["data"]["object"]["pid"] == pid

    def test_get_object_unknown_pid(self, server):
        out = server.handle(
            rpc("tools/call", {"name": "iod.get_object", "arguments": {"pid": "iod:law/" + "0" * 16}})
        )
        assert out["error"]["code"] == INVALID_PARAMS

    def test_graph_neighbors(self, server):
        out = server.handle(
            rpc(
                "tools/call",
                {"name": "iod.graph_neighbors", "arguments": {"ref": "node:ti3sic2", "link_kind": "semantic"}},
            )
        )
        assert "node:max phase" in out["result"]["data"]["refs"]

    def test_calls_never_mutate_stores(self, ti_corpus, server):
        before_objects = {str(o.pid) for o in ti_corpus.store.all_objects()}
        before_nodes = dict(ti_corpus.kg.nodes)
        server.handle(rpc("tools/call", {"name": "iod.search_fine", "arguments": {"text": "density"}}))
        server.handle(
            rpc("tools/call", {"name": "iod.graph_neighbors", "arguments": {"ref": "node:ti3sic2"}})
        )
        assert {str(o.pid) for o in ti_corpus.store.all_objects()} == before_objects
        assert ti_corpus.kg.nodes == before_nodes

    def test_filters_pass_through(self, server):
        out = server.handle(
            rpc(
                "tools/call",
                {
                    "name": "iod.search_objects",
                    "arguments": {"text": "notes", "strategy": "keyword", "filters": {"domain": "pharma"}},
                },
            )
        )
        for item in out["result"]["data"]["items"]:
            assert item["metadata"]["domain"] == "pharma"


class TestStdio:
    def test_loop_serves_lines_and_survives_garbage(self, server):
        lines = [
            json.dumps(rpc("tools/list")),
            "garbage that is not json",
            json.dumps(rpc("tools/call", {"name": "iod.search_chunks", "arguments": {"text": "granite"}}, 2)),
        ]
        stdin = io.StringIO("\n".join(lines) + "\n")
        stdout = io.StringIO()
        serve_stdio(server, stdin=stdin, stdout=stdout)
        replies = [json.loads(line) for line in stdout.getvalue().splitlines()]
        assert len(replies) == 3
        assert replies[0]["result"]["tools"]
        assert replies[1]["error"]["code"] == PARSE_ERROR
        assert replies[2]["id"] == 2
