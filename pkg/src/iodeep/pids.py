"""Persistent identifiers for digital objects.

A pid is a deterministic function of (domain, payload digest) for top-level
objects, or (domain, payload digest, parent, ordinal) for level-2 chunk
objects. Canonical text form: ``iod:{domain}/{suffix}`` (L1) or
``iod:{domain}/{parent_suffix}.{ordinal}`` (L2). Identity, hashing, and
ordering all follow the canonical text, which is what round-trips through
parse/format.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from iodeep.errors import PidError

DOMAIN_RE = re.compile(r"^[a-z0-9_-]+$")
SUFFIX_HEX_CHARS = 16
_SUFFIX_RE = re.compile(r"^[0-9a-f]{16}$")
_PID_RE = re.compile(
    r"^iod:(?P<domain>[a-z0-9_-]+)/(?P<suffix>[0-9a-f]{16})(?:\.(?P<ordinal>\d+))?$"
)


class Level(str, Enum):
    L1 = "L1"
    L2 = "L2"


@dataclass(frozen=True, eq=False)
class Pid:
    """Persistent identifier; L2 pids carry their parent suffix and ordinal.

    ``suffix`` is the first 16 hex chars of the payload's SHA-256. For L2
    pids the canonical text names (parent_suffix, ordinal) instead of the
    chunk's own suffix, so the suffix is informational there.
    """

    domain: str
    suffix: str
    level: Level = Level.L1
    parent_suffix: Optional[str] = None
    ordinal: Optional[int] = None
    _text: str = field(init=False, repr=False)

    def __post_init__(self):
        if not DOMAIN_RE.match(self.domain):
            raise PidError(f"invalid domain token {self.domain!r}")
        if not _SUFFIX_RE.match(self.suffix):
            raise PidError(
                f"suffix must be {SUFFIX_HEX_CHARS} lowercase hex chars, got {self.suffix!r}"
            )
        is_l2 = self.level is Level.L2
        if is_l2 != (self.parent_suffix is not None and self.ordinal is not None):
            raise PidError("L2 iff parent_suffix and ordinal are present")
        if self.parent_suffix is not None and not _SUFFIX_RE.match(self.parent_suffix):
            raise PidError(f"invalid parent suffix {self.parent_suffix!r}")
        if self.ordinal is not None and self.ordinal < 0:
            raise PidError("ordinal must be non-negative")
        if is_l2:
            text = f"iod:{self.domain}/{self.parent_suffix}.{self.ordinal}"
        else:
            text = f"iod:{self.domain}/{self.suffix}"
        object.__setattr__(self, "_text", text)

    def __str__(self) -> str:
        return self._text

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pid):
            return NotImplemented
        return self._text == other._text

    def __hash__(self) -> int:
        return hash(self._text)

    def __lt__(self, other: "Pid") -> bool:
        return self._text < other._text

    @property
    def is_chunk(self) -> bool:
        return self.level is Level.L2

    def parent_pid_text(self) -> str:
        """Canonical text of the parent pid (L2 only)."""
        if self.level is not Level.L2:
            raise PidError(f"{self} is not an L2 pid")
        return f"iod:{self.domain}/{self.parent_suffix}"


def mint_pid(
    domain: str,
    payload_digest: bytes,
    parent: Pid | None = None,
    ordinal: int | None = None,
) -> Pid:
    """Deterministically mint a pid from a domain and a 32-byte payload digest.

    With ``parent`` and ``ordinal`` the result is an L2 chunk pid addressed
    by (parent suffix, ordinal); the chunk's own content digest still fills
    ``suffix``.
    """
    if not DOMAIN_RE.match(domain):
        raise PidError(f"invalid domain token {domain!r}")
    if len(payload_digest) != 32:
        raise PidError(f"payload digest must be 32 bytes, got {len(payload_digest)}")
    if (parent is None) != (ordinal is None):
        raise PidError("parent and ordinal must both be present or both absent")
    suffix = payload_digest.hex()[:SUFFIX_HEX_CHARS]
    if parent is None:
        return Pid(domain=domain, suffix=suffix)
    if ordinal is not None and ordinal < 0:
        raise PidError("ordinal must be non-negative")
    return Pid(
        domain=domain,
        suffix=suffix,
        level=Level.L2,
        parent_suffix=parent.suffix,
        ordinal=ordinal,
    )


def parse_pid(text: str) -> Pid:
    """Parse the canonical text form back into a Pid."""
    m = _PID_RE.match(text)
    if not m:
        raise PidError(f"unparseable pid {text!r}")
    if m.group("ordinal") is None:
        return Pid(domain=m.group("domain"), suffix=m.group("suffix"))
    return Pid(
        domain=m.group("domain"),
        suffix=m.group("suffix"),
        level=Level.L2,
        parent_suffix=m.group("suffix"),
        ordinal=int(m.group("ordinal")),
    )


def digest_payload(payload: bytes) -> bytes:
    """SHA-256 of the raw payload; the pid suffix is its first 16 hex chars."""
    return hashlib.sha256(payload).digest()
