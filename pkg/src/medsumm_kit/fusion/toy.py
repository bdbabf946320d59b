"""Toy vocabulary and task for exercising the fusion model at desk scale,
plus the finite-difference gradient check."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .model import (
    TRAINABLE,
    Example,
    FusionConfig,
    FusionModel,
    format_target,
    loss,
    loss_and_grads,
    make_example,
    train_step,
)

SPECIALS = ("<pad>", "<bos>", "<eos>", "SYMPTOM:", "|", "SUMMARY:")

# category -> (symptom word, summary words); four visual classes
TOY_CLASSES = {
    "ENT": ("tonsils", ("throat", "pain")),
    "EYE": ("redness", ("eye", "itching")),
    "LIMB": ("edema", ("leg", "swelling")),
    "SKIN": ("rash", ("skin", "itching")),
}
TOY_QUERIES = (
    ("mujhe", "dard"),
    ("bahut", "pareshani"),
    ("kya", "karu"),
    ("madad", "chahiye"),
)


class Vocab:
    def __init__(self, tokens: Sequence[str]):
        self.tokens = tuple(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("vocabulary has duplicate tokens")

    def __len__(self):
        return len(self.tokens)

    @property
    def bos_id(self) -> int:
        return self.index["<bos>"]

    @property
    def eos_id(self) -> int:
        return self.index["<eos>"]

    def encode(self, text: str) -> list[int]:
        try:
            return [self.index[t] for t in text.split()]
        except KeyError as e:
            raise ValueError(f"token {e.args[0]!r} not in vocabulary") from None

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self.tokens[i] for i in ids)


def toy_vocab(size: int = 32) -> Vocab:
    words = list(SPECIALS)
    for symptom, summary in TOY_CLASSES.values():
        for w in (symptom, *summary):
            if w not in words:
                words.append(w)
    for q in TOY_QUERIES:
        for w in q:
            if w not in words:
                words.append(w)
    if len(words) > size:
        raise ValueError(f"toy vocabulary needs at least {len(words)} entries")
    words += [f"<unused{i}>" for i in range(size - len(words))]
    return Vocab(words)


@dataclass(frozen=True)
class ToySample:
    vision: np.ndarray
    prompt_ids: tuple[int, ...]
    y_ids: tuple[int, ...]  # serialized target, ends with <eos>
    category: str

    @property
    def target_text(self) -> str:
        symptom, summary = TOY_CLASSES[self.category]
        return format_target(symptom, " ".join(summary))


def toy_task(config: FusionConfig, vocab: Vocab, n_samples: int = 16, seed: int = 0) -> list[ToySample]:
    """Samples whose target depends only on the image class, so the decoder
    must read the vision slot to get the symptom right."""
    rng = np.random.default_rng(seed)
    protos = rng.normal(0, 1, (len(TOY_CLASSES), config.vision_dim))
    cats = list(TOY_CLASSES)
    out = []
    for i in range(n_samples):
        ci = i % len(cats)
        cat = cats[ci]
        vision = protos[ci] + rng.normal(0, 0.05, config.vision_dim)
        query = TOY_QUERIES[(i // len(cats)) % len(TOY_QUERIES)]
        prompt = [vocab.bos_id] + vocab.encode(" ".join(query))
        symptom, summary = TOY_CLASSES[cat]
        y = vocab.encode(format_target(symptom, " ".join(summary))) + [vocab.eos_id]
        out.append(ToySample(vision, tuple(prompt), tuple(y), cat))
    return out


def to_examples(config: FusionConfig, samples: Sequence[ToySample]) -> list[Example]:
    return [
        make_example(config, s.vision if config.multimodal else None, s.prompt_ids, s.y_ids)
        for s in samples
    ]


def save_task(samples: Sequence[ToySample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(
                json.dumps(
                    {
                        "vision": [float(x) for x in s.vision],
                        "prompt_ids": list(s.prompt_ids),
                        "y_ids": list(s.y_ids),
                        "category": s.category,
                    }
                )
                + "\n"
            )


def load_task(path) -> list[ToySample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(
                    ToySample(np.asarray(d["vision"], float), tuple(d["prompt_ids"]), tuple(d["y_ids"]), d["category"])
                )
    return out


@dataclass
class TrainLog:
    losses: list[float]

    @property
    def initial(self) -> float:
        return self.losses[0]

    @property
    def final(self) -> float:
        return self.losses[-1]

    @property
    def ratio(self) -> float:
        return self.final / self.initial


def train(model: FusionModel, examples: Sequence[Example], steps: int = 200, learning_rate: float = 0.5) -> TrainLog:
    """Full-batch gradient descent; the log holds the loss before each step and after the last."""
    losses = [train_step(model, examples, learning_rate) for _ in range(steps)]
    losses.append(loss(model, examples))
    return TrainLog(losses)


@dataclass
class GradCheck:
    max_rel_error: float
    n_checked: int
    worst: tuple[str, tuple]


def gradient_check(model: FusionModel, examples: Sequence[Example], h: float = 1e-4, randomize_b: bool = True, seed: int = 0) -> GradCheck:
    """Compare analytic gradients with central differences on every trainable scalar.

    B starts at zero, which makes dL/dA vanish identically; by default B is
    set to small random values first so every path carries signal.
    """
    model = model.copy()
    if randomize_b:
        rng = np.random.default_rng(seed + 1)
        for k in ("b_q", "b_v"):
            model.params[k] = rng.normal(0, 0.1, model.params[k].shape)
    _, grads = loss_and_grads(model, examples)
    worst = 0.0
    worst_at = ("", ())
    n = 0
    for name in TRAINABLE:
        arr = model.params[name]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = loss(model, examples)
            arr[idx] = orig - h
            down = loss(model, examples)
            arr[idx] = orig
            numeric = (up - down) / (2 * h)
            analytic = grads[name][idx]
            denom = max(abs(numeric) + abs(analytic), 1e-8)
            rel = abs(numeric - analytic) / denom
            n += 1
            if rel > worst:
                worst, worst_at = rel, (name, idx)
    return GradCheck(worst, n, worst_at)


def tiny_config(seed: int = 0, multimodal: bool = True) -> FusionConfig:
    """Smallest config used for exhaustive gradient checks."""
    return FusionConfig(
        vocab_size=8, text_dim=6, vision_dim=3, context_len=6, adapter_rank=2, adapter_scale=4.0, quant_block_size=4, seed=seed, multimodal=multimodal
    )


def tiny_examples(config: FusionConfig, n: int = 2, seed: int = 0) -> list[Example]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        prompt = list(rng.integers(0, config.vocab_size, 2))
        y = list(rng.integers(0, config.vocab_size, 3))
        v = rng.normal(0, 1, config.vision_dim) if config.multimodal else None
        out.append(make_example(config, v, prompt, y))
    return out


def unimodal(config: FusionConfig) -> FusionConfig:
    return replace(config, multimodal=False)
