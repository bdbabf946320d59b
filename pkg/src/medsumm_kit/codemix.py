"""Lexicon-based language tagging and the Code-Mixing Index (CMI).

CMI = 100 * (1 - max_i(w_i) / (n - u)), where n is the token count, u the
count of language-independent tokens and w_i the tokens of language i.
Returns 0 when every token is independent.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .textnorm import TokenSeq

_INDEPENDENT_RE = re.compile(r"^[\d०-९]+$|^[^\w]+$")


class Tag(str, Enum):
    LANG1 = "LANG1"
    LANG2 = "LANG2"
    INDEPENDENT = "INDEPENDENT"


class AmbiguityPolicy(str, Enum):
    PREFER_LANG1 = "PreferLang1"
    PREFER_LANG2 = "PreferLang2"
    INDEPENDENT = "Independent"


@dataclass(frozen=True)
class Lexicons:
    lang1_words: frozenset[str]
    lang2_words: frozenset[str]
    independent_pattern: re.Pattern = _INDEPENDENT_RE

    def __post_init__(self):
        l1 = frozenset(w.strip().lower() for w in self.lang1_words if w.strip())
        l2 = frozenset(w.strip().lower() for w in self.lang2_words if w.strip())
        if not l1 or not l2:
            raise ValueError("both lexicons must be non-empty")
        object.__setattr__(self, "lang1_words", l1)
        object.__setattr__(self, "lang2_words", l2)

    @classmethod
    def from_files(cls, lang1_path, lang2_path) -> "Lexicons":
        return cls(read_lexicon(lang1_path), read_lexicon(lang2_path))


def read_lexicon(path) -> frozenset[str]:
    """One word per line, UTF-8; blank lines and ``#`` comments ignored."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


@dataclass(frozen=True)
class LanguageTagging:
    tags: tuple[Tag, ...]

    @property
    def n(self) -> int:
        return len(self.tags)

    @property
    def u(self) -> int:
        return sum(t is Tag.INDEPENDENT for t in self.tags)

    @property
    def w(self) -> tuple[int, int]:
        return (
            sum(t is Tag.LANG1 for t in self.tags),
            sum(t is Tag.LANG2 for t in self.tags),
        )

    @classmethod
    def from_counts(cls, lang1: int, lang2: int, independent: int = 0) -> "LanguageTagging":
        return cls((Tag.LANG1,) * lang1 + (Tag.LANG2,) * lang2 + (Tag.INDEPENDENT,) * independent)


def tag_tokens(
    seq: TokenSeq | Sequence[str],
    lexicons: Lexicons,
    ambiguity_policy: AmbiguityPolicy = AmbiguityPolicy.INDEPENDENT,
) -> LanguageTagging:
    policy = AmbiguityPolicy(ambiguity_policy)
    tags = []
    for tok in seq:
        tok = tok.lower()
        if lexicons.independent_pattern.match(tok):
            tags.append(Tag.INDEPENDENT)
            continue
        in1 = tok in lexicons.lang1_words
        in2 = tok in lexicons.lang2_words
        if in1 and in2:
            tags.append(
                {
                    AmbiguityPolicy.PREFER_LANG1: Tag.LANG1,
                    AmbiguityPolicy.PREFER_LANG2: Tag.LANG2,
                    AmbiguityPolicy.INDEPENDENT: Tag.INDEPENDENT,
                }[policy]
            )
        elif in1:
            tags.append(Tag.LANG1)
        elif in2:
            tags.append(Tag.LANG2)
        else:
            tags.append(Tag.INDEPENDENT)
    return LanguageTagging(tuple(tags))


def cmi_from_counts(n: int, u: int, w: Iterable[int]) -> float:
    w = tuple(w)
    if n < 1:
        raise ValueError("CMI undefined for an empty utterance")
    if n != u + sum(w):
        raise ValueError(f"inconsistent counts: n={n}, u={u}, w={w}")
    if n == u:
        return 0.0
    return 100.0 * (1.0 - max(w) / (n - u))


def cmi(tagging: LanguageTagging) -> float:
    return cmi_from_counts(tagging.n, tagging.u, tagging.w)


@dataclass
class CorpusCMI:
    mean_cmi: float
    per_record: list  # float, or None for skipped empty records
    skipped: int


def corpus_cmi(
    corpus: Sequence[TokenSeq | Sequence[str]],
    lexicons: Lexicons,
    policy: AmbiguityPolicy = AmbiguityPolicy.INDEPENDENT,
) -> CorpusCMI:
    if not corpus:
        raise ValueError("corpus is empty")
    per_record = []
    for seq in corpus:
        tagging = tag_tokens(seq, lexicons, policy)
        per_record.append(cmi(tagging) if tagging.n else None)
    values = [v for v in per_record if v is not None]
    if not values:
        raise ValueError("every record in the corpus is empty")
    return CorpusCMI(sum(values) / len(values), per_record, len(per_record) - len(values))
