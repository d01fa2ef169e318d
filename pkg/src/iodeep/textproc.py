"""Tokenization, stopwords, and sentence splitting shared by indexing and mocks.

Tokens are lowercase runs of Unicode letters/digits; CJK runs fall back to
character bigrams so Chinese text stays searchable without a segmenter.
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from functools import lru_cache
from importlib import resources

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)
_SENTENCE_END_RE = re.compile(r"(?<=[.!?。！？])\s+")


def _is_cjk(ch: str) -> bool:
    code = ord(ch)
    return (
        0x4E00 <= code <= 0x9FFF
        or 0x3400 <= code <= 0x4DBF
        or 0xF900 <= code <= 0xFAFF
        or 0x3040 <= code <= 0x30FF
    )


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; CJK runs emit bigrams (single char if length 1)."""
    tokens: list[str] = []
    for match in _WORD_RE.finditer(text):
        run = match.group(0)
        pieces: list[str] = []
        current = []
        current_cjk = None
        for ch in run:
            cjk = _is_cjk(ch)
            if current and cjk != current_cjk:
                pieces.append(("cjk" if current_cjk else "word", "".join(current)))
                current = []
            current.append(ch)
            current_cjk = cjk
        if current:
            pieces.append(("cjk" if current_cjk else "word", "".join(current)))
        for kind, piece in pieces:
            if kind == "word":
                tokens.append(piece.lower())
            elif len(piece) == 1:
                tokens.append(piece)
            else:
                tokens.extend(piece[i : i + 2] for i in range(len(piece) - 1))
    return tokens


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    """The fixed English stopword list shipped as a versioned data file."""
    data = resources.files("iodeep.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in data.splitlines() if line.strip() and not line.startswith("#")
    )


def content_tokens(text: str) -> list[str]:
    """Tokens with stopwords removed."""
    stop = stopwords()
    return [t for t in tokenize(text) if t not in stop]


def top_tokens(text: str, n: int) -> list[str]:
    """Most frequent non-stopword tokens; frequency desc, then first appearance."""
    toks = content_tokens(text)
    counts = Counter(toks)
    first_seen = {}
    for i, t in enumerate(toks):
        first_seen.setdefault(t, i)
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    return ranked[:n]


def surface_forms(text: str) -> dict[str, str]:
    """Map each lowercase token to its first-seen surface form in the text."""
    forms: dict[str, str] = {}
    for match in _WORD_RE.finditer(text):
        run = match.group(0)
        if any(_is_cjk(c) for c in run):
            continue
        forms.setdefault(run.lower(), run)
    return forms


def split_sentences(text: str) -> list[str]:
    """Split on sentence-final punctuation (ASCII and CJK); keeps terminators."""
    parts = [p.strip() for p in _SENTENCE_END_RE.split(text)]
    return [p for p in parts if p]


def jaccard(a: list[str] | set[str], b: list[str] | set[str]) -> float:
    """Jaccard overlap between two token collections."""
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def truncate_utf8(text: str, limit: int) -> str:
    """Truncate to at most ``limit`` characters without breaking surrogates."""
    if len(text) <= limit:
        return text
    cut = text[:limit]
    if cut and unicodedata.category(cut[-1]) == "Cs":
        cut = cut[:-1]
    return cut
