"""Single-layer causal decoder with a trainable vision projection and low-rank
adapters over a frozen, int4-quantized base.

Shapes follow the ``y = x @ W.T`` convention, W being (out, in). The vision
feature enters as one soft token at position 0.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ..data import GenerationOutput
from .quant import QuantizedTensor, dequantize, quantize

FROZEN = ("embed", "pos", "w_q", "w_k", "w_v", "w_o", "head")
TRAINABLE = ("proj", "a_q", "b_q", "a_v", "b_v")
ADAPTED = {"w_q": ("a_q", "b_q"), "w_v": ("a_v", "b_v")}

_Y_RE = re.compile(r"^\s*SYMPTOM:\s*(?P<t>.*?)\s*\|\s*SUMMARY:\s*(?P<s>.*?)\s*$", re.S)


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    vocab_size: int = 32
    text_dim: int = 16
    vision_dim: int = 8
    context_len: int = 16
    adapter_rank: int = 4
    adapter_scale: float = 4.0
    quant_block_size: int = 32
    seed: int = 0
    multimodal: bool = True

    def __post_init__(self):
        for name in ("vocab_size", "text_dim", "vision_dim", "context_len", "adapter_rank", "quant_block_size"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not self.adapter_scale > 0:
            raise ValueError(f"adapter_scale must be positive, got {self.adapter_scale!r}")
        if self.adapter_rank > self.text_dim:
            raise ValueError(f"adapter_rank {self.adapter_rank} exceeds text_dim {self.text_dim}")

    @property
    def lora_scaling(self) -> float:
        return self.adapter_scale / self.adapter_rank

    @classmethod
    def full_scale(cls, **kw) -> "FusionConfig":
        base = dict(vocab_size=64, text_dim=4096, vision_dim=768, context_len=8, adapter_rank=8, adapter_scale=16.0)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)


class FusionModel:
    def __init__(self, config: FusionConfig, frozen: dict, trainable: dict):
        self.config = config
        self.frozen: dict[str, QuantizedTensor] = frozen
        self.params: dict[str, np.ndarray] = trainable

    @classmethod
    def init(cls, config: FusionConfig) -> "FusionModel":
        c = config
        rng = np.random.default_rng(c.seed)
        d, V = c.text_dim, c.vocab_size
        b = c.quant_block_size
        frozen = {
            "embed": quantize(rng.normal(0, 1, (V, d)), b),
            "pos": quantize(rng.normal(0, 0.5, (c.context_len, d)), b),
        }
        for name in ("w_q", "w_k", "w_v", "w_o"):
            frozen[name] = quantize(rng.normal(0, d**-0.5, (d, d)), b)
        frozen["head"] = quantize(rng.normal(0, d**-0.5, (V, d)), b)
        params = {
            "proj": rng.normal(0, c.vision_dim**-0.5, (d, c.vision_dim)),
            "a_q": rng.normal(0, d**-0.5, (c.adapter_rank, d)),
            "b_q": np.zeros((d, c.adapter_rank)),
            "a_v": rng.normal(0, d**-0.5, (c.adapter_rank, d)),
            "b_v": np.zeros((d, c.adapter_rank)),
        }
        return cls(config, frozen, params)

    def weight(self, name: str) -> np.ndarray:
        return dequantize(self.frozen[name])

    def effective_weight(self, name: str) -> np.ndarray:
        w = self.weight(name)
        if name in ADAPTED:
            a, b = ADAPTED[name]
            w = w + self.config.lora_scaling * (self.params[b] @ self.params[a])
        return w

    def frozen_digest(self) -> bytes:
        return b"".join(self.frozen[k].tobytes() for k in FROZEN)

    def copy(self) -> "FusionModel":
        return FusionModel(self.config, dict(self.frozen), {k: v.copy() for k, v in self.params.items()})

    @property
    def n_trainable(self) -> int:
        return sum(v.size for v in self.params.values())

    def save(self, path) -> None:
        arrays = {"config": np.array(json.dumps(self.config.to_dict()))}
        for k, q in self.frozen.items():
            arrays[f"frozen/{k}/codes"] = q.codes
            arrays[f"frozen/{k}/scales"] = q.scales
            arrays[f"frozen/{k}/shape"] = np.array(q.shape)
        for k, v in self.params.items():
            arrays[f"param/{k}"] = v
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "FusionModel":
        with np.load(path) as z:
            config = FusionConfig(**json.loads(str(z["config"])))
            frozen = {
                k: QuantizedTensor(
                    z[f"frozen/{k}/codes"],
                    z[f"frozen/{k}/scales"],
                    tuple(int(s) for s in z[f"frozen/{k}/shape"]),
                    config.quant_block_size,
                )
                for k in FROZEN
            }
            params = {k: z[f"param/{k}"].copy() for k in TRAINABLE}
        return cls(config, frozen, params)


def encode_inputs(model: FusionModel, vision_feature, token_ids: Sequence[int]) -> np.ndarray:
    """Vision slot (P @ v) followed by token embeddings, plus positions."""
    c = model.config
    ids = list(token_ids)
    if any(not 0 <= t < c.vocab_size for t in ids):
        raise ValueError(f"token id out of range [0, {c.vocab_size})")
    n_slots = len(ids) + (1 if c.multimodal else 0)
    if n_slots > c.context_len:
        raise ValueError(f"sequence of {n_slots} positions exceeds context_len {c.context_len}")
    rows = []
    if c.multimodal:
        if vision_feature is None:
            raise ValueError("multimodal model needs a vision feature")
        v = np.asarray(vision_feature, dtype=np.float64)
        if v.shape != (c.vision_dim,):
            raise ValueError(f"vision feature has shape {v.shape}, expected ({c.vision_dim},)")
        rows.append(model.params["proj"] @ v)
    if ids:
        rows.append(model.weight("embed")[ids])
    if not rows:
        return np.zeros((0, c.text_dim))
    x = np.vstack(rows)
    return x + model.weight("pos")[: x.shape[0]]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(x, w_q, w_k, w_v, w_o, head):
    T, d = x.shape
    q = x @ w_q.T
    k = x @ w_k.T
    v = x @ w_v.T
    scores = (q @ k.T) / np.sqrt(d)
    scores = np.where(np.tril(np.ones((T, T), dtype=bool)), scores, -np.inf)
    att = _softmax(scores)
    z = att @ v
    h = x + z @ w_o.T
    logits = h @ head.T
    cache = dict(x=x, q=q, k=k, v=v, att=att, z=z, h=h)
    return logits, cache


def forward(model: FusionModel, x: np.ndarray) -> np.ndarray:
    """Logits (T x V) for an encoded sequence, adapters applied to W_q and W_v."""
    w = {n: model.effective_weight(n) for n in ("w_q", "w_k", "w_v", "w_o")}
    logits, _ = _forward(x, w["w_q"], w["w_k"], w["w_v"], w["w_o"], model.weight("head"))
    return logits


def base_forward(model: FusionModel, x: np.ndarray) -> np.ndarray:
    """Logits of the frozen quantized base alone (no adapters)."""
    w = {n: model.weight(n) for n in ("w_q", "w_k", "w_v", "w_o")}
    logits, _ = _forward(x, w["w_q"], w["w_k"], w["w_v"], w["w_o"], model.weight("head"))
    return logits


def next_token_probs(model: FusionModel, x: np.ndarray) -> np.ndarray:
    return _softmax(forward(model, x))


@dataclass(frozen=True)
class Example:
    """One training item. ``targets[p]`` is the id predicted at encoded
    position p, or -1 where no loss applies."""

    vision: Optional[np.ndarray]
    input_ids: tuple[int, ...]
    targets: tuple[int, ...]


def make_example(model_or_config, vision, prompt_ids: Sequence[int], y_ids: Sequence[int]) -> Example:
    """Build an example whose loss covers only the serialized Y tokens."""
    c = model_or_config.config if isinstance(model_or_config, FusionModel) else model_or_config
    prompt_ids, y_ids = list(prompt_ids), list(y_ids)
    if not prompt_ids or not y_ids:
        raise ValueError("prompt and target must both be non-empty")
    input_ids = prompt_ids + y_ids[:-1]
    offset = 1 if c.multimodal else 0
    T = len(input_ids) + offset
    targets = [-1] * T
    first = offset + len(prompt_ids) - 1
    for k, t in enumerate(y_ids):
        targets[first + k] = t
    v = None if vision is None else np.asarray(vision, dtype=np.float64)
    return Example(v, tuple(input_ids), tuple(targets))


def loss_and_grads(model: FusionModel, batch: Sequence[Example], with_grads: bool = True):
    """Mean next-token cross-entropy over all target positions in ``batch``."""
    c = model.config
    s = c.lora_scaling
    p = model.params
    w_q = model.effective_weight("w_q")
    w_k = model.weight("w_k")
    w_v = model.effective_weight("w_v")
    w_o = model.weight("w_o")
    head = model.weight("head")
    n_targets = sum(t >= 0 for ex in batch for t in ex.targets)
    if n_targets == 0:
        raise ValueError("batch has no target positions")
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    d_wq = np.zeros_like(w_q)
    d_wv = np.zeros_like(w_v)
    total = 0.0
    for ex in batch:
        x = encode_inputs(model, ex.vision, ex.input_ids)
        logits, cache = _forward(x, w_q, w_k, w_v, w_o, head)
        tgt = np.asarray(ex.targets)
        rows = np.nonzero(tgt >= 0)[0]
        z = logits[rows] - logits[rows].max(axis=1, keepdims=True)
        log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        total += -log_probs[np.arange(len(rows)), tgt[rows]].sum()
        probs = np.exp(log_probs)
        if not with_grads:
            continue
        d_logits = np.zeros_like(logits)
        probs[np.arange(len(rows)), tgt[rows]] -= 1.0
        d_logits[rows] = probs / n_targets

        d = x.shape[1]
        att, q, k, v = cache["att"], cache["q"], cache["k"], cache["v"]
        d_h = d_logits @ head
        d_x = d_h.copy()
        d_z = d_h @ w_o
        d_att = d_z @ v.T
        d_v = att.T @ d_z
        d_scores = att * (d_att - (d_att * att).sum(axis=1, keepdims=True))
        d_q = d_scores @ k / np.sqrt(d)
        d_k = d_scores.T @ q / np.sqrt(d)
        d_wq += d_q.T @ x
        d_wv += d_v.T @ x
        d_x += d_q @ w_q + d_k @ w_k + d_v @ w_v
        if c.multimodal:
            grads["proj"] += np.outer(d_x[0], ex.vision)
    loss = total / n_targets
    if not np.isfinite(loss):
        raise NonFiniteLoss(
            f"non-finite loss {loss!r}; param norms: "
            + ", ".join(f"{k}={np.linalg.norm(v):.3g}" for k, v in p.items())
        )
    if with_grads:
        grads["b_q"] = s * d_wq @ p["a_q"].T
        grads["a_q"] = s * p["b_q"].T @ d_wq
        grads["b_v"] = s * d_wv @ p["a_v"].T
        grads["a_v"] = s * p["b_v"].T @ d_wv
    return float(loss), grads


def loss(model: FusionModel, batch: Sequence[Example]) -> float:
    return loss_and_grads(model, batch, with_grads=False)[0]


def train_step(model: FusionModel, batch: Sequence[Example], learning_rate: float) -> float:
    """One full-batch gradient-descent update of P, A, B. Returns the pre-update loss."""
    value, grads = loss_and_grads(model, batch)
    if learning_rate:
        for k, g in grads.items():
            model.params[k] -= learning_rate * g
    return value


def format_target(symptom: str, summary: str) -> str:
    return f"SYMPTOM: {symptom} | SUMMARY: {summary}"


def parse_target(raw: str) -> GenerationOutput:
    m = _Y_RE.match(raw)
    if not m:
        return GenerationOutput(raw=raw, parse_failed=True)
    return GenerationOutput(symptom_note=m.group("t"), summary=m.group("s"), raw=raw)


def greedy_decode(model: FusionModel, vision_feature, prompt_ids: Sequence[int], max_len: int, eos_id: int) -> list[int]:
    ids = list(prompt_ids)
    out: list[int] = []
    offset = 1 if model.config.multimodal else 0
    for _ in range(max_len):
        if len(ids) + offset > model.config.context_len:
            break
        x = encode_inputs(model, vision_feature, ids)
        nxt = int(np.argmax(forward(model, x)[-1]))
        if nxt == eos_id:
            break
        out.append(nxt)
        ids.append(nxt)
    return out


def generate(model: FusionModel, vision_feature, prompt_ids: Sequence[int], max_len: int, vocab) -> GenerationOutput:
    if max_len <= 0:
        return GenerationOutput(parse_failed=True)
    ids = greedy_decode(model, vision_feature, prompt_ids, max_len, vocab.eos_id)
    return parse_target(vocab.decode(ids))
