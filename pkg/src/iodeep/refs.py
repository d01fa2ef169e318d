"""Tagged references into the layered index, with a total order.

Every artifact (object, chunk, KG node, KG edge, atomic fact) is addressed
by one GraphRef; ranking ties and merges break deterministically on the
(tag rank, key) order. String form ``{tag}:{key}`` round-trips.
"""

from __future__ import annotations

from dataclasses import dataclass

from iodeep.errors import PidError
from iodeep.pids import Pid, parse_pid

TAG_ORDER = ("object", "chunk", "node", "edge", "fact")
_TAG_RANK = {tag: i for i, tag in enumerate(TAG_ORDER)}
EDGE_KEY_SEP = "|"


@dataclass(frozen=True, eq=True)
class GraphRef:
    tag: str
    key: str

    def __post_init__(self):
        if self.tag not in _TAG_RANK:
            raise ValueError(f"unknown ref tag {self.tag!r}")

    def __str__(self) -> str:
        return f"{self.tag}:{self.key}"

    def __lt__(self, other: "GraphRef") -> bool:
        return (_TAG_RANK[self.tag], self.key) < (_TAG_RANK[other.tag], other.key)

    def sort_key(self) -> tuple[int, str]:
        return (_TAG_RANK[self.tag], self.key)


def object_ref(pid: Pid | str) -> GraphRef:
    return GraphRef("object", str(pid))

def chunk_ref(pid: Pid | str) -> GraphRef:
    return GraphRef("chunk", str(pid))

def node_ref(node_key: str) -> GraphRef:
    return GraphRef("node", node_key)

def edge_ref(endpoint_a: str, endpoint_b: str) -> GraphRef:
    a, b = sorted((endpoint_a, endpoint_b))
    return GraphRef("edge", f"{a}{EDGE_KEY_SEP}{b}")

def fact_ref(fact_id: str) -> GraphRef:
    return GraphRef("fact", fact_id)


def parse_ref(text: str) -> GraphRef:
    tag, sep, key = text.partition(":")
    if not sep or tag not in _TAG_RANK or not key:
        raise ValueError(f"unparseable ref {text!r}")
    return GraphRef(tag, key)


def ref_pid(ref: GraphRef) -> Pid:
    """The pid behind an object/chunk ref."""
    if ref.tag not in ("object", "chunk"):
        raise PidError(f"ref {ref} does not name a pid")
    return parse_pid(ref.key)


def edge_endpoints(ref: GraphRef) -> tuple[str, str]:
    if ref.tag != "edge":
        raise ValueError(f"ref {ref} is not an edge")
    a, _, b = ref.key.partition(EDGE_KEY_SEP)
    return a, b
