"""Single-reference ROUGE-1/2/L, cumulative BLEU-1..4 and exact-match METEOR.

All scores are fractions in [0, 1]. Inputs are token sequences (see
:func:`medsumm_kit.textnorm.tokenize`).
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .textnorm import ngrams

METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5

# Upper bound on search nodes for the exact chunk-minimizing METEOR alignment.
_METEOR_SEARCH_BUDGET = 20_000


@dataclass(frozen=True)
class PrecisionRecallF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, p: float, r: float) -> "PrecisionRecallF":
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


@dataclass(frozen=True)
class BleuScore:
    b1: float
    b2: float
    b3: float
    b4: float
    brevity_penalty: float
    precisions: tuple[float, float, float, float]

    def cumulative(self, n: int) -> float:
        return (self.b1, self.b2, self.b3, self.b4)[n - 1]


def _overlap(cand, ref) -> int:
    return sum(min(c, ref[g]) for g, c in cand.items() if g in ref)


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int = 1) -> PrecisionRecallF:
    if n not in (1, 2):
        raise ValueError(f"rouge_n supports n in {{1, 2}}, got {n}")
    c = ngrams(candidate, n)
    r = ngrams(reference, n)
    hits = _overlap(c, r)
    n_c = sum(c.values())
    n_r = sum(r.values())
    p = hits / n_c if n_c else 0.0
    rec = hits / n_r if n_r else 0.0
    return PrecisionRecallF.from_pr(p, rec)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> PrecisionRecallF:
    cand, ref = tuple(candidate), tuple(reference)
    lcs = lcs_length(cand, ref)
    p = lcs / len(cand) if cand else 0.0
    r = lcs / len(ref) if ref else 0.0
    return PrecisionRecallF.from_pr(p, r)


def modified_precision(candidate: Sequence[str], reference: Sequence[str], n: int) -> float:
    c = ngrams(candidate, n)
    total = sum(c.values())
    if total == 0:
        return 0.0
    return _overlap(c, ngrams(reference, n)) / total


def bleu(candidate: Sequence[str], reference: Sequence[str]) -> BleuScore:
    cand, ref = tuple(candidate), tuple(reference)
    c, r = len(cand), len(ref)
    if c == 0:
        return BleuScore(0.0, 0.0, 0.0, 0.0, 0.0 if r else 1.0, (0.0, 0.0, 0.0, 0.0))
    precisions = tuple(modified_precision(cand, ref, n) for n in range(1, 5))
    bp = 1.0 if c > r else math.exp(1 - r / c)
    scores = []
    log_sum = 0.0
    for n, p in enumerate(precisions, start=1):
        if p == 0 or (scores and scores[-1] == 0.0):
            scores.append(0.0)
            continue
        log_sum += math.log(p)
        scores.append(bp * math.exp(log_sum / n))
    return BleuScore(*scores, brevity_penalty=bp, precisions=precisions)


def _count_chunks(pairs) -> int:
    """Chunks in an alignment given as (cand_idx, ref_idx) pairs."""
    chunks = 0
    prev = None
    for i, j in sorted(pairs):
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def _greedy_alignment(cand, ref) -> list[tuple[int, int]]:
    # Fallback when exact search is too large: take each candidate token's
    # earliest free reference occurrence, preferring the one extending a chunk.
    free = defaultdict(list)
    for j, w in enumerate(ref):
        free[w].append(j)
    pairs = []
    prev_j = None
    for i, w in enumerate(cand):
        slots = free.get(w)
        if not slots:
            prev_j = None
            continue
        j = prev_j + 1 if prev_j is not None and prev_j + 1 in slots else slots[0]
        slots.remove(j)
        pairs.append((i, j))
        prev_j = j
    return pairs


def meteor_alignment(candidate: Sequence[str], reference: Sequence[str]) -> tuple[int, int]:
    """Return (matches, chunks) for the maximum-match, minimum-chunk alignment.

    Match count is fixed by the unigram multiset overlap; among all alignments
    reaching it, the one with the fewest chunks is found by memoized search.
    """
    cand, ref = tuple(candidate), tuple(reference)
    positions = defaultdict(list)
    for j, w in enumerate(ref):
        positions[w].append(j)
    cand_count = defaultdict(int)
    for w in cand:
        cand_count[w] += 1
    m = sum(min(cand_count[w], len(positions[w])) for w in cand_count)
    if m == 0:
        return 0, 0

    if all(cand_count[w] == 1 and len(positions[w]) <= 1 for w in cand_count):
        # every match is forced
        return m, _count_chunks((i, positions[w][0]) for i, w in enumerate(cand) if positions[w])

    # Remaining candidate occurrences of w after position i, used to decide
    # whether skipping a token can still reach m matches.
    remaining_after = []
    seen = defaultdict(int)
    for w in reversed(cand):
        remaining_after.append(dict(seen))
        seen[w] += 1
    remaining_after.reverse()

    budget = [_METEOR_SEARCH_BUDGET]

    class _Exhausted(Exception):
        pass

    @lru_cache(maxsize=None)
    def best(i: int, prev_j: int, used: frozenset) -> int:
        # prev_j == -2 means token i-1 was unmatched.
        budget[0] -= 1
        if budget[0] < 0:
            raise _Exhausted
        if i == len(cand):
            return 0
        w = cand[i]
        quota = min(cand_count[w], len(positions[w]))
        used_w = sum(1 for j in positions[w] if j in used)
        need = quota - used_w
        options = []
        if need <= remaining_after[i].get(w, 0):
            options.append(best(i + 1, -2, used))
        if need > 0:
            for j in positions[w]:
                if j in used:
                    continue
                new_chunk = 0 if (prev_j >= 0 and j == prev_j + 1) else 1
                options.append(new_chunk + best(i + 1, j, used | {j}))
        return min(options) if options else math.inf

    try:
        chunks = best(0, -2, frozenset())
    except (_Exhausted, RecursionError):
        chunks = _count_chunks(_greedy_alignment(cand, ref))
    return m, int(chunks)


def meteor(candidate: Sequence[str], reference: Sequence[str]) -> float:
    cand, ref = tuple(candidate), tuple(reference)
    m, chunks = meteor_alignment(cand, ref)
    if m == 0:
        return 0.0
    p = m / len(cand)
    r = m / len(ref)
    f_mean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
    penalty = METEOR_GAMMA * (chunks / m) ** METEOR_BETA
    return f_mean * (1 - penalty)
