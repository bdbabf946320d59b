"""Tokenization, n-grams and clean-up of generated summaries."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

# Letters/digits plus the Devanagari block (vowel signs are combining marks,
# which \w does not cover). Danda U+0964/U+0965 is punctuation and excluded.
_TOKEN_RE = re.compile(r"(?:[^\W_]|[ऀ-ॣ०-ॿ])+")
_WS_RE = re.compile(r"\s+")
_SENT_SPLIT_RE = re.compile(r"(?<=[.?!])\s+")
_SENT_END = ".?!"


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple[str, ...]
    spans: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.spans:
            object.__setattr__(self, "spans", tuple((0, 0) for _ in self.tokens))
        else:
            object.__setattr__(self, "spans", tuple(tuple(s) for s in self.spans))
        if len(self.spans) != len(self.tokens):
            raise ValueError("tokens and spans differ in length")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    @classmethod
    def of(cls, tokens: Iterable[str]) -> "TokenSeq":
        """Wrap a bare token list (no source text)."""
        return cls(tuple(tokens))


def tokenize(text: str) -> TokenSeq:
    """Split ``text`` into lowercased word tokens with character spans."""
    tokens = []
    spans = []
    for m in _TOKEN_RE.finditer(text):
        tokens.append(m.group().lower())
        spans.append(m.span())
    return TokenSeq(tuple(tokens), tuple(spans))


def ngrams(seq: TokenSeq | Iterable[str], n: int) -> Counter:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    toks = tuple(seq)
    return Counter(toks[i : i + n] for i in range(len(toks) - n + 1))


def collapse_ws(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def normalize_phrase(text: str) -> str:
    """Lowercase + whitespace collapse; the canonical form for facts and keys."""
    return collapse_ws(text).lower()


def _sentence_key(sentence: str) -> str:
    return normalize_phrase(sentence).rstrip(_SENT_END).rstrip()


def split_sentences(text: str) -> list[str]:
    text = collapse_ws(text)
    if not text:
        return []
    return [s for s in _SENT_SPLIT_RE.split(text) if s]


def postprocess_generation(text: str) -> str:
    """Collapse extra whitespace and drop sentences repeated earlier in the text.

    >>> postprocess_generation("Take  rest.  Take rest.")
    'Take rest.'
    """
    seen = set()
    kept = []
    for sent in split_sentences(text):
        key = _sentence_key(sent)
        if key in seen:
            continue
        seen.add(key)
        kept.append(sent)
    return " ".join(kept)
