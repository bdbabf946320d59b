from .model import (
    Example,
    FusionConfig,
    FusionModel,
    NonFiniteLoss,
    base_forward,
    encode_inputs,
    format_target,
    forward,
    generate,
    loss,
    loss_and_grads,
    make_example,
    next_token_probs,
    parse_target,
    train_step,
)
from .quant import QuantizedTensor, dequantize, quantize

__all__ = [
    "Example",
    "FusionConfig",
    "FusionModel",
    "NonFiniteLoss",
    "QuantizedTensor",
    "base_forward",
    "dequantize",
    "encode_inputs",
    "format_target",
    "forward",
    "generate",
    "loss",
    "loss_and_grads",
    "make_example",
    "next_token_probs",
    "parse_target",
    "quantize",
    "train_step",
]
