"""Corpus records, JSONL (de)serialization, dedup and seeded splitting."""
from __future__ import annotations

import json
import math
import random
from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .textnorm import normalize_phrase

FIELDS = (
    "id",
    "query_codemixed",
    "query_english",
    "image_ref",
    "image_feature",
    "golden_summary",
    "disorder_phrase",
    "gold_facts",
    "category",
)


class Category(str, Enum):
    ENT = "ENT"
    EYE = "EYE"
    LIMB = "LIMB"
    SKIN = "SKIN"


class CorpusError(ValueError):
    """Invalid corpus input. ``line`` is 1-based when known."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    query_codemixed: str
    golden_summary: str = ""
    query_english: Optional[str] = None
    image_ref: Optional[str] = None
    image_feature: Optional[tuple[float, ...]] = None
    disorder_phrase: Optional[str] = None
    gold_facts: tuple[str, ...] = ()
    category: Optional[Category] = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("record id must be a non-empty string")
        if not self.query_codemixed or not self.query_codemixed.strip():
            raise ValueError(f"record {self.id!r}: query_codemixed is empty")
        if self.image_feature is not None:
            object.__setattr__(self, "image_feature", tuple(float(x) for x in self.image_feature))
        object.__setattr__(self, "gold_facts", tuple(self.gold_facts))
        if self.category is not None and not isinstance(self.category, Category):
            try:
                object.__setattr__(self, "category", Category(self.category))
            except ValueError:
                raise ValueError(
                    f"record {self.id!r}: category {self.category!r} not one of "
                    f"{[c.value for c in Category]}"
                ) from None

    def to_dict(self) -> dict:
        d = {}
        for name in FIELDS:
            v = getattr(self, name)
            if isinstance(v, Category):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            d[name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecord":
        unknown = set(d) - set(FIELDS)
        if unknown:
            raise ValueError(f"unknown fields: {sorted(unknown)}")
        if "id" not in d or "query_codemixed" not in d:
            raise ValueError("missing required field 'id' or 'query_codemixed'")
        kw = {k: v for k, v in d.items() if v is not None}
        return cls(**kw)


@dataclass(frozen=True)
class GenerationOutput:
    symptom_note: str = ""
    summary: str = ""
    raw: str = ""
    parse_failed: bool = False


@dataclass(frozen=True)
class CorpusSplit:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int
    ratios: tuple[float, float, float]
    stratified: bool = False

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.train_ids), len(self.val_ids), len(self.test_ids)

    def to_dict(self) -> dict:
        return {
            "train_ids": list(self.train_ids),
            "val_ids": list(self.val_ids),
            "test_ids": list(self.test_ids),
            "seed": self.seed,
            "ratios": list(self.ratios),
            "stratified": self.stratified,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSplit":
        return cls(
            tuple(d["train_ids"]),
            tuple(d["val_ids"]),
            tuple(d["test_ids"]),
            int(d["seed"]),
            tuple(float(r) for r in d["ratios"]),
            bool(d.get("stratified", False)),
        )


def dumps_record(record: DatasetRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False)


def load_corpus(path, feature_dim: Optional[int] = None) -> list[DatasetRecord]:
    """Read a JSONL corpus, one record per line; blank lines are skipped.

    When ``feature_dim`` is None the first record carrying an image feature
    fixes the expected dimension for the rest of the file.
    """
    path = str(path)
    records = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"malformed JSON ({e.msg})", path, lineno) from None
            if not isinstance(obj, dict):
                raise CorpusError("record is not a JSON object", path, lineno)
            try:
                rec = DatasetRecord.from_dict(obj)
            except (TypeError, ValueError) as e:
                raise CorpusError(str(e), path, lineno) from None
            if rec.id in seen:
                raise CorpusError(
                    f"duplicate id {rec.id!r} (first seen on line {seen[rec.id]})", path, lineno
                )
            seen[rec.id] = lineno
            if rec.image_feature is not None:
                if feature_dim is None:
                    feature_dim = len(rec.image_feature)
                elif len(rec.image_feature) != feature_dim:
                    raise CorpusError(
                        f"image_feature has length {len(rec.image_feature)}, expected {feature_dim}",
                        path,
                        lineno,
                    )
            records.append(rec)
    return records


def write_corpus(records: Iterable[DatasetRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_record(rec))
            fh.write("\n")


def dedup_key(text: str) -> str:
    return normalize_phrase(text)


def dedup(records: Sequence[DatasetRecord]) -> tuple[list[DatasetRecord], int]:
    """Drop records whose normalized query repeats an earlier one."""
    seen = set()
    kept = []
    for rec in records:
        key = dedup_key(rec.query_codemixed)
        if key in seen:
            continue
        seen.add(key)
        kept.append(rec)
    return kept, len(records) - len(kept)


def _check_ratios(ratios) -> tuple[float, float, float]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ValueError(f"expected three ratios, got {len(ratios)}")
    if any(r < 0 or math.isnan(r) for r in ratios):
        raise ValueError(f"ratios must be non-negative: {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")
    return ratios


def _split_ids(ids: list[str], ratios, rng: random.Random):
    ids = list(ids)
    rng.shuffle(ids)
    n = len(ids)
    # Epsilon absorbs products like 90*0.7 = 62.99999999999999.
    n_train = math.floor(n * ratios[0] + 1e-9)
    n_val = min(math.floor(n * ratios[1] + 1e-9), n - n_train)
    return ids[:n_train], ids[n_train : n_train + n_val], ids[n_train + n_val :]


def split(
    records: Sequence[DatasetRecord],
    ratios=(0.8, 0.05, 0.15),
    seed: int = 0,
    stratify: bool = False,
) -> CorpusSplit:
    ratios = _check_ratios(ratios)
    rng = random.Random(seed)
    ids = [r.id for r in records]
    if not stratify:
        train, val, test = _split_ids(ids, ratios, rng)
    else:
        strata: dict = defaultdict(list)
        for r in records:
            strata[r.category.value if r.category else None].append(r.id)
        train, val, test = [], [], []
        for key in sorted(strata, key=lambda k: (k is None, k or "")):
            a, b, c = _split_ids(strata[key], ratios, rng)
            train += a
            val += b
            test += c
    return CorpusSplit(tuple(train), tuple(val), tuple(test), seed, ratios, stratify)


def write_split(s: CorpusSplit, path) -> None:
    Path(path).write_text(json.dumps(s.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def load_split(path) -> CorpusSplit:
    return CorpusSplit.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def with_query(record: DatasetRecord, query: str) -> DatasetRecord:
    return replace(record, query_codemixed=query)
