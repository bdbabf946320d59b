"""Symptom-keyword matching and corpus filtering.

Terms are matched as whole tokens (same tokenizer as the metrics), longest
term first, non-overlapping, scanning left to right.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from typing import Mapping, Optional, Sequence

from .data import Category, DatasetRecord
from .textnorm import collapse_ws, normalize_phrase, tokenize

DEFAULT_CUE_TEMPLATE = "Please see what happened to my {region} in the image below."


@dataclass(frozen=True)
class SymptomTerm:
    canonical: str
    variants: tuple[str, ...] = ()
    region: Optional[str] = None

    def surface_forms(self) -> tuple[str, ...]:
        return (self.canonical,) + tuple(v for v in self.variants if v != self.canonical)


@dataclass(frozen=True)
class SymptomTaxonomy:
    categories: Mapping[Category, tuple[SymptomTerm, ...]]

    def __post_init__(self):
        if not self.categories or not any(self.categories.values()):
            raise ValueError("taxonomy must contain at least one category with terms")
        cats = {}
        seen = set()
        for code, terms in self.categories.items():
            code = Category(code)
            for t in terms:
                if not normalize_phrase(t.canonical):
                    raise ValueError(f"empty canonical term in {code.value}")
                key = normalize_phrase(t.canonical)
                if key in seen:
                    raise ValueError(f"canonical term {t.canonical!r} appears twice")
                seen.add(key)
            cats[code] = tuple(terms)
        object.__setattr__(self, "categories", cats)

    def terms(self):
        for code, terms in self.categories.items():
            for t in terms:
                yield code, t

    def region_for(self, phrase: str) -> Optional[str]:
        key = normalize_phrase(phrase)
        for _, t in self.terms():
            if key in {normalize_phrase(s) for s in t.surface_forms()}:
                return t.region
        return None

    @classmethod
    def from_dict(cls, d: Mapping) -> "SymptomTaxonomy":
        cats = {}
        for code, entries in d.items():
            terms = []
            for e in entries:
                if isinstance(e, str):
                    terms.append(SymptomTerm(e))
                else:
                    terms.append(
                        SymptomTerm(e["canonical"], tuple(e.get("variants", ())), e.get("region"))
                    )
            cats[Category(code)] = tuple(terms)
        return cls(cats)

    @classmethod
    def from_file(cls, path) -> "SymptomTaxonomy":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls) -> "SymptomTaxonomy":
        text = resources.files("medsumm_kit").joinpath("resources/taxonomy.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Match:
    canonical: str
    category: Category
    span: tuple[int, int]


@dataclass(frozen=True)
class MatchResult:
    matches: tuple[Match, ...] = ()

    def __bool__(self):
        return bool(self.matches)

    def __len__(self):
        return len(self.matches)

    @property
    def counts(self) -> Counter:
        return Counter(m.category for m in self.matches)


class KeywordTrie:
    """Token-level trie; each terminal node stores (canonical, category)."""

    _LEAF = object()

    def __init__(self):
        self._root: dict = {}
        self._size = 0

    def insert(self, tokens: Sequence[str], payload: tuple[str, Category]):
        if not tokens:
            raise ValueError("cannot insert an empty term")
        node = self._root
        for tok in tokens:
            node = node.setdefault(tok, {})
        existing = node.get(self._LEAF)
        if existing is not None and existing[0] != payload[0]:
            raise ValueError(
                f"term {' '.join(tokens)!r} maps to both {existing[0]!r} and {payload[0]!r}"
            )
        if existing is None:
            self._size += 1
        node[self._LEAF] = payload

    def lookup(self, tokens: Sequence[str]):
        node = self._root
        for tok in tokens:
            node = node.get(tok)
            if node is None:
                return None
        return node.get(self._LEAF)

    def __len__(self):
        return self._size

    def longest_at(self, tokens: Sequence[str], start: int):
        """Return (end, payload) for the longest term starting at ``start``."""
        node = self._root
        best = None
        for i in range(start, len(tokens)):
            node = node.get(tokens[i])
            if node is None:
                break
            payload = node.get(self._LEAF)
            if payload is not None:
                best = (i + 1, payload)
        return best


def build_trie(taxonomy: SymptomTaxonomy) -> KeywordTrie:
    trie = KeywordTrie()
    for code, term in taxonomy.terms():
        for form in term.surface_forms():
            toks = tokenize(form).tokens
            if not toks:
                raise ValueError(f"term variant {form!r} has no word tokens")
            trie.insert(toks, (term.canonical, code))
    return trie


def find_terms(text: str, trie: KeywordTrie) -> MatchResult:
    seq = tokenize(text)
    toks = seq.tokens
    out = []
    i = 0
    while i < len(toks):
        hit = trie.longest_at(toks, i)
        if hit is None:
            i += 1
            continue
        end, (canonical, code) = hit
        out.append(Match(canonical, code, (seq.spans[i][0], seq.spans[end - 1][1])))
        i = end
    return MatchResult(tuple(out))


class RequireIn(str, Enum):
    QUERY = "Query"
    SUMMARY = "Summary"
    EITHER = "Either"
    BOTH = "Both"


@dataclass
class FilterResult:
    kept: list[DatasetRecord]
    histogram: Counter = field(default_factory=Counter)  # first match per record
    mentions: Counter = field(default_factory=Counter)  # every category a record matched
    dropped: int = 0


def filter_corpus(
    records: Sequence[DatasetRecord],
    trie: KeywordTrie,
    require_in: RequireIn = RequireIn.QUERY,
) -> FilterResult:
    require_in = RequireIn(require_in)
    result = FilterResult(kept=[])
    for rec in records:
        q = find_terms(rec.query_codemixed, trie)
        s = find_terms(rec.golden_summary or "", trie)
        keep = {
            RequireIn.QUERY: bool(q),
            RequireIn.SUMMARY: bool(s),
            RequireIn.EITHER: bool(q) or bool(s),
            RequireIn.BOTH: bool(q) and bool(s),
        }[require_in]
        if not keep:
            result.dropped += 1
            continue
        result.kept.append(rec)
        if require_in is RequireIn.SUMMARY:
            ordered = list(s.matches)
        else:
            ordered = list(q.matches) + list(s.matches)
        result.histogram[ordered[0].category] += 1
        for code in dict.fromkeys(m.category for m in ordered):
            result.mentions[code] += 1
    return result


def _cue_sentence(record: DatasetRecord, template: str, taxonomy: Optional[SymptomTaxonomy]) -> str:
    region = taxonomy.region_for(record.disorder_phrase) if taxonomy else None
    return collapse_ws(template.format(region=region or record.disorder_phrase.strip()))


def inject_visual_cue(
    record: DatasetRecord,
    template: str = DEFAULT_CUE_TEMPLATE,
    taxonomy: Optional[SymptomTaxonomy] = None,
) -> DatasetRecord:
    """Append the image-reference sentence to the query; a no-op if already present.

    The ``{region}`` placeholder is filled from the taxonomy entry whose
    surface forms include the record's disorder phrase, else the phrase itself.
    """
    if not record.disorder_phrase or not record.image_ref:
        raise ValueError(f"record {record.id!r} needs disorder_phrase and image_ref for a visual cue")
    cue = _cue_sentence(record, template, taxonomy)
    query = collapse_ws(record.query_codemixed)
    if query.lower().endswith(cue.lower()):
        return record
    if not re.search(r"[.?!]$", query):
        query += "."
    return replace(record, query_codemixed=f"{query} {cue}")
