from .check import check_gradients, numeric_grad, relative_error
from .ops import (
    BatchNormState,
    batchnorm,
    conv2d,
    kl_diag_gaussian,
    linear,
    maxpool2,
    relu,
    softmax,
    softmax_ce,
    upconv2,
)
from .optim import AdamState, adam_step
from .tensor import GraphConsumedError, Tensor

__all__ = [
    "AdamState",
    "BatchNormState",
    "GraphConsumedError",
    "Tensor",
    "adam_step",
    "batchnorm",
    "check_gradients",
    "conv2d",
    "kl_diag_gaussian",
    "linear",
    "maxpool2",
    "numeric_grad",
    "relative_error",
    "relu",
    "softmax",
    "softmax_ce",
    "upconv2",
]
