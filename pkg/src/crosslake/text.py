"""Tokenization helpers shared by documents, metadata fields and queries."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from .porter import stem

_WORD_RE = re.compile(r"[a-z0-9]+")
_IDENT_RE = re.compile(r"[A-Za-z][a-z]*|[A-Z]+(?![a-z])|[0-9]+")


def _load_stopwords() -> frozenset[str]:
    data = resources.files("crosslake.data").joinpath("stopwords.txt").read_text()
    return frozenset(w.strip() for w in data.splitlines() if w.strip())


STOPWORDS = _load_stopwords()


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens, punctuation stripped."""
    return _WORD_RE.findall(text.lower())


@lru_cache(maxsize=65536)
def _cached_stem(token: str) -> str:
    return stem(token)


def content_tokens(text: str) -> list[str]:
    """Full document pipeline minus the corpus df filter: tokenize,
    drop stopwords, stem."""
    return [_cached_stem(t) for t in tokenize(text) if t not in STOPWORDS]


def split_identifier(name: str) -> list[str]:
    """Split an identifier on underscores, camelCase and digit boundaries."""
    return [m.lower() for m in _IDENT_RE.findall(name)]


def metadata_tokens(*parts: str) -> list[str]:
    """Tokens for names/titles/sources: identifier-aware split, stopword
    filter, stemmed. No df filtering (metadata is tiny)."""
    out: list[str] = []
    for part in parts:
        for tok in split_identifier(part):
            if tok and tok not in STOPWORDS:
                out.append(_cached_stem(tok))
    return out


def sentences(text: str) -> list[str]:
    """Greedy sentence split on ., ! and ? followed by whitespace."""
    parts = re.split(r"(?<=[.!?])\s+", text.strip())
    return [p for p in parts if p]


def paragraphs(text: str) -> list[str]:
    parts = re.split(r"\n\s*\n", text.strip())
    return [p.strip() for p in parts if p.strip()]
