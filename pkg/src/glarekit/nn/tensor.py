"""Parameter containers for the fixed-topology network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Tensor:
    """A dense float array with an optional same-shape gradient buffer."""

    data: np.ndarray
    grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        if self.grad is None or self.grad.shape != self.data.shape:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)


@dataclass
class LayerParams:
    """Weight/bias pair plus the descriptor the ops need.

    ``kind`` is one of ``conv3`` (3x3, stride 1, pad 1), ``upconv2``
    (2x2 transposed, stride 2) or ``conv1`` (1x1 projection).
    """

    kind: str
    in_channels: int
    out_channels: int
    weight: Tensor
    bias: Tensor

    def zero_grad(self):
        self.weight.zero_grad()
        self.bias.zero_grad()

    def tensors(self):
        return (self.weight, self.bias)
