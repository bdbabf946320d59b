"""Blockwise symmetric absmax int4 quantization.

Each block of ``block`` consecutive elements (row-major) is stored as integer
codes in [-7, 7] plus one scale = absmax / 7. Rounding is half away from zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QMAX = 7


@dataclass(frozen=True)
class QuantizedTensor:
    codes: np.ndarray  # int8, flattened, values in [-7, 7]
    scales: np.ndarray  # float64, one per block
    shape: tuple[int, ...]
    block: int

    def dequantize(self) -> np.ndarray:
        return dequantize(self)

    @property
    def n_blocks(self) -> int:
        return len(self.scales)

    def __eq__(self, other):
        if not isinstance(other, QuantizedTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.block == other.block
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.scales, other.scales)
        )

    def tobytes(self) -> bytes:
        return self.codes.tobytes() + self.scales.tobytes()


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(tensor, block: int = 32) -> QuantizedTensor:
    if block < 1:
        raise ValueError(f"block size must be >= 1, got {block}")
    arr = np.asarray(tensor, dtype=np.float64)
    flat = arr.ravel()
    n = flat.size
    n_blocks = -(-n // block)
    padded = np.zeros(n_blocks * block)
    padded[:n] = flat
    blocks = padded.reshape(n_blocks, block)
    absmax = np.abs(blocks).max(axis=1) if n else np.zeros(0)
    scales = absmax / QMAX
    safe = np.where(scales > 0, scales, 1.0)
    codes = _round_half_away(blocks / safe[:, None])
    codes = np.clip(codes, -QMAX, QMAX).astype(np.int8).ravel()[:n]
    return QuantizedTensor(codes, scales, tuple(arr.shape), block)


def dequantize(q: QuantizedTensor) -> np.ndarray:
    n = q.codes.size
    per_elem = np.repeat(q.scales, q.block)[:n]
    return (q.codes.astype(np.float64) * per_elem).reshape(q.shape)


def block_error_bound(tensor, block: int) -> np.ndarray:
    """Per-element bound absmax_block / 14 (half a quantization step)."""
    arr = np.asarray(tensor, dtype=np.float64).ravel()
    n = arr.size
    n_blocks = -(-n // block)
    padded = np.zeros(n_blocks * block)
    padded[:n] = np.abs(arr)
    absmax = padded.reshape(n_blocks, block).max(axis=1)
    return np.repeat(absmax / (2 * QMAX), block)[:n].reshape(np.shape(tensor))
