"""Fact-based human-evaluation metrics: MMFCM, factual recall, omission,
hallucination, rating aggregation and inter-annotator kappa."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Hashable, Iterable, Mapping, Sequence

from .textnorm import normalize_phrase

CRITERIA = ("clinical_eval", "fluency", "adequacy", "informativeness", "persuasiveness")


class DisorderJudgment(str, Enum):
    FULLY_CORRECT = "FullyCorrect"
    PARTIALLY_CORRECT = "PartiallyCorrect"
    INCORRECT = "Incorrect"
    ABSENT = "Absent"


DISORDER_BONUS = {
    DisorderJudgment.FULLY_CORRECT: 2,
    DisorderJudgment.PARTIALLY_CORRECT: 1,
    DisorderJudgment.INCORRECT: -1,
    DisorderJudgment.ABSENT: 0,
}


class EmptyGoldFacts(ValueError):
    pass


def _norm_facts(facts: Iterable[str]) -> frozenset[str]:
    out = set()
    for f in facts:
        nf = normalize_phrase(f)
        if not nf:
            raise ValueError("fact strings must be non-empty")
        out.add(nf)
    return frozenset(out)


@dataclass(frozen=True)
class FactAnnotation:
    gold_facts: frozenset[str]
    generated_facts: frozenset[str]
    disorder_judgment: DisorderJudgment = DisorderJudgment.ABSENT

    def __post_init__(self):
        object.__setattr__(self, "gold_facts", _norm_facts(self.gold_facts))
        object.__setattr__(self, "generated_facts", _norm_facts(self.generated_facts))
        object.__setattr__(self, "disorder_judgment", DisorderJudgment(self.disorder_judgment))

    @property
    def correct(self) -> frozenset[str]:
        return self.gold_facts & self.generated_facts

    def _require_gold(self):
        if not self.gold_facts:
            raise EmptyGoldFacts("annotation has no gold facts; metric undefined")


def mmfcm(annotation: FactAnnotation) -> float:
    """Multi-modal fact capturing metric.

    Correct-fact count plus the disorder bonus (+2 fully correct, +1 partially,
    -1 incorrect, 0 absent), divided by the gold fact count and squashed by tanh.
    """
    annotation._require_gold()
    score = len(annotation.correct) + DISORDER_BONUS[annotation.disorder_judgment]
    return math.tanh(score / len(annotation.gold_facts))


def factual_recall(annotation: FactAnnotation) -> float:
    annotation._require_gold()
    return len(annotation.correct) / len(annotation.gold_facts)


def omission_and_hallucination(annotation: FactAnnotation) -> tuple[float, float]:
    annotation._require_gold()
    gold, gen = annotation.gold_facts, annotation.generated_facts
    omission = len(gold - gen) / len(gold)
    halluc = len(gen - gold) / len(gen) if gen else 0.0
    return omission, halluc


@dataclass
class RatingSummary:
    means: dict[str, float]
    missing: list[str]

    def rendered(self) -> dict[str, str]:
        return {k: f"{v:.2f}" for k, v in self.means.items()}


def aggregate_ratings(
    ratings: Iterable[Mapping[str, Iterable[int]]],
    criteria: Sequence[str] = CRITERIA,
) -> RatingSummary:
    """Mean rating per criterion over all samples and annotators.

    ``ratings`` holds one mapping per sample: criterion -> ratings from each
    annotator. Criteria without any rating are reported in ``missing``.
    """
    sums: Counter = Counter()
    counts: Counter = Counter()
    for sample in ratings:
        for crit, values in sample.items():
            if crit not in criteria:
                raise ValueError(f"unknown rating criterion {crit!r}")
            for v in values:
                if isinstance(v, bool) or int(v) != v or not 1 <= v <= 5:
                    raise ValueError(f"rating {v!r} for {crit} outside 1..5")
                sums[crit] += int(v)
                counts[crit] += 1
    means = {c: sums[c] / counts[c] for c in criteria if counts[c]}
    missing = [c for c in criteria if not counts[c]]
    return RatingSummary(means, missing)


def cohen_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> float:
    if len(labels_a) != len(labels_b):
        raise ValueError(f"label lists differ in length: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        raise ValueError("kappa needs at least one item")
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    ca, cb = Counter(labels_a), Counter(labels_b)
    p_e = sum(ca[k] * cb[k] for k in ca) / (n * n)
    if p_e == 1:
        if p_o == 1:
            return 1.0
        raise ValueError("kappa undefined: chance agreement is 1 but raters disagree")
    return (p_o - p_e) / (1 - p_e)


def multi_annotator_kappa(label_lists: Sequence[Sequence[Hashable]]) -> float:
    """Mean pairwise Cohen's kappa across annotators."""
    if len(label_lists) < 2:
        raise ValueError("need at least two annotators")
    lengths = {len(l) for l in label_lists}
    if len(lengths) != 1:
        raise ValueError(f"annotator label lists have different lengths: {sorted(lengths)}")
    pairs = list(combinations(label_lists, 2))
    return sum(cohen_kappa(a, b) for a, b in pairs) / len(pairs)
