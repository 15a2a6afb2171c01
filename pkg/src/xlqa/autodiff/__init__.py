from .tensor import Tensor, cat, grad_enabled, no_grad
from .ops import (
    GRADCHECK_CASES,
    conv1d,
    depthwise_separable_conv1d,
    dropout,
    embedding_lookup,
    highway,
    layer_norm,
    log_softmax,
    multi_head_self_attention,
    softmax,
)
from .gradcheck import check_gradients

__all__ = [
    "GRADCHECK_CASES",
    "Tensor",
    "cat",
    "check_gradients",
    "conv1d",
    "depthwise_separable_conv1d",
    "dropout",
    "embedding_lookup",
    "grad_enabled",
    "highway",
    "layer_norm",
    "log_softmax",
    "multi_head_self_attention",
    "no_grad",
    "softmax",
]
