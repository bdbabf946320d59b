"""Greedy cosine matching over supplied per-token embeddings (BERTScore-style)."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lexical import PrecisionRecallF


@dataclass(frozen=True)
class EmbeddedText:
    tokens: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim == 1 and vecs.size == 0:
            vecs = vecs.reshape(0, 0)
        if vecs.ndim != 2:
            raise ValueError("vectors must be a 2-D array (tokens x dim)")
        if len(self.tokens) != vecs.shape[0]:
            raise ValueError(f"{len(self.tokens)} tokens but {vecs.shape[0]} vectors")
        if vecs.shape[0] and not np.all(np.linalg.norm(vecs, axis=1) > 0):
            raise ValueError("every embedding vector must have positive norm")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "vectors", vecs)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def embedding_score(candidate: EmbeddedText, reference: EmbeddedText) -> PrecisionRecallF:
    if not candidate.tokens or not reference.tokens:
        raise ValueError("embedding_score needs non-empty candidate and reference")
    if candidate.dim != reference.dim:
        raise ValueError(f"embedding dimension mismatch: {candidate.dim} vs {reference.dim}")
    c = candidate.vectors / np.linalg.norm(candidate.vectors, axis=1, keepdims=True)
    r = reference.vectors / np.linalg.norm(reference.vectors, axis=1, keepdims=True)
    sim = c @ r.T
    p = float(sim.max(axis=1).mean())
    rec = float(sim.max(axis=0).mean())
    # negative cosines can push P + R below zero; F is clamped there
    if p + rec <= 0:
        return PrecisionRecallF(p, rec, 0.0)
    return PrecisionRecallF.from_pr(p, rec)


def load_embeddings(path) -> dict[str, EmbeddedText]:
    """Read ``{id, tokens, vectors}`` JSONL into a dict keyed by id."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out[str(obj["id"])] = EmbeddedText(tuple(obj["tokens"]), obj["vectors"])
            except (KeyError, ValueError, TypeError) as e:
                raise ValueError(f"{path}:{lineno}: bad embedding record ({e})") from None
    return out


def from_pairs(tokens: Sequence[str], vectors) -> EmbeddedText:
    return EmbeddedText(tuple(tokens), np.asarray(vectors, dtype=np.float64))
