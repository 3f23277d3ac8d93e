"""Minimal differentiable tensor core: exactly the layer operations the
segmentation network needs, each with an analytic forward and backward
pass verified against finite differences."""

from .tensor import Tensor, LayerParams
from .ops import (
    conv2d,
    conv2d_backward,
    conv1x1,
    conv1x1_backward,
    relu,
    relu_backward,
    maxpool2,
    maxpool2_backward,
    upconv2,
    upconv2_backward,
    concat_channels,
    split_channels,
    softmax2,
    weighted_cross_entropy,
)
from .optim import AdamState, sgd_step, adam_step
from .gradcheck import finite_diff_check

__all__ = [
    "Tensor",
    "LayerParams",
    "conv2d",
    "conv2d_backward",
    "conv1x1",
    "conv1x1_backward",
    "relu",
    "relu_backward",
    "maxpool2",
    "maxpool2_backward",
    "upconv2",
    "upconv2_backward",
    "concat_channels",
    "split_channels",
    "softmax2",
    "weighted_cross_entropy",
    "AdamState",
    "sgd_step",
    "adam_step",
    "finite_diff_check",
]
