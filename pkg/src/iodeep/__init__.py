"""iodeep: deep research over an internet-of-data object registry.

Raw files become digital objects with deterministic persistent identifiers,
get refined into embeddings, a knowledge graph, and atomic facts, and are
served to a planner/worker/reporter agent loop through multi-granularity
retrieval tools.
"""

__version__ = "0.1.0"

from iodeep.errors import (
    ConflictError,
    DatasetError,
    GatewayError,
    IodeepError,
    IndexBuildError,
    NotFoundError,
    ParseError,
    PidError,
    QueryError,
)
from iodeep.pids import Pid, mint_pid

__all__ = [
    "ConflictError",
    "DatasetError",
    "GatewayError",
    "IndexBuildError",
    "IodeepError",
    "NotFoundError",
    "ParseError",
    "Pid",
    "PidError",
    "QueryError",
    "mint_pid",
    "__version__",
]
