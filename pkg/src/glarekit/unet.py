"""Multi-branch encoder-decoder segmentation network.

Each input representation feeds its own encoder stack; the branches are
fused by channel concatenation at the bottleneck, and every decoder
scale additionally concatenates the matching-scale skip features of ALL
branches so no branch's information is dropped.  The head is a 1x1
projection to two logits (background, glare).

Widths follow the classic halving/doubling scheme scaled by the branch
count n: encoder scale s is ``base_width * 2**s`` per branch, the fused
decoder runs at ``n * base_width * 2**s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .representations import PLANE_CHANNELS, PixelPlaneSet
from .nn import (
    LayerParams,
    Tensor,
    concat_channels,
    conv1x1,
    conv1x1_backward,
    conv2d,
    conv2d_backward,
    maxpool2,
    maxpool2_backward,
    relu,
    relu_backward,
    softmax2,
    split_channels,
    upconv2,
    upconv2_backward,
    weighted_cross_entropy,
)
from .nn import checkpoint as ckpt


@dataclass(frozen=True)
class BranchSpec:
    name: str
    in_channels: int

    def __post_init__(self):
        if self.name not in PLANE_CHANNELS:
            raise ConfigurationError(f"unknown branch name {self.name!r}")
        if self.in_channels != PLANE_CHANNELS[self.name]:
            raise ConfigurationError(
                f"branch {self.name} expects {PLANE_CHANNELS[self.name]} channels,"
                f" got {self.in_channels}"
            )

    @classmethod
    def from_name(cls, name: str) -> "BranchSpec":
        if name not in PLANE_CHANNELS:
            raise ConfigurationError(f"unknown branch name {name!r}")
        return cls(name, PLANE_CHANNELS[name])


@dataclass(frozen=True)
class UNetConfig:
    """Declarative description of the network.

    ``base_width`` 16 is the desk-scale default; 64 mirrors the classic
    full-size configuration.  Input spatial dims must be divisible by
    ``2**depth``.
    """

    branches: tuple[BranchSpec, ...]
    depth: int = 4
    base_width: int = 16
    convs_per_block: int = 2

    def __post_init__(self):
        if not 1 <= len(self.branches) <= 4:
            raise ConfigurationError("need between 1 and 4 branches")
        names = [b.name for b in self.branches]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate branch names {names}")
        if self.depth < 1:
            raise ConfigurationError("depth must be >= 1")
        if self.base_width < 1:
            raise ConfigurationError("base_width must be >= 1")
        if self.convs_per_block < 1:
            raise ConfigurationError("convs_per_block must be >= 1")

    @property
    def branch_names(self):
        return tuple(b.name for b in self.branches)

    def to_dict(self) -> dict:
        return {
            "branches": list(self.branch_names),
            "depth": self.depth,
            "base_width": self.base_width,
            "convs_per_block": self.convs_per_block,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        return cls(
            branches=tuple(BranchSpec.from_name(n) for n in d["branches"]),
            depth=int(d["depth"]),
            base_width=int(d["base_width"]),
            convs_per_block=int(d["convs_per_block"]),
        )


def _he_conv(rng, kind, c_in, c_out, kh, kw, dtype=np.float32) -> LayerParams:
    std = np.sqrt(2.0 / (c_in * kh * kw))
    if kind == "upconv2":
        shape = (c_in, c_out, kh, kw)
    else:
        shape = (c_out, c_in, kh, kw)
    w = (rng.standard_normal(shape) * std).astype(dtype)
    b = np.zeros(c_out, dtype=dtype)
    return LayerParams(kind, c_in, c_out, Tensor(w), Tensor(b))


class Model:
    """Instantiated parameters for one :class:`UNetConfig`."""

    def __init__(self, config: UNetConfig, enc, bott, ups, dec, head):
        self.config = config
        self.enc = enc  # [branch][scale] -> list of conv3 LayerParams
        self.bott = bott  # [branch] -> list of conv3 LayerParams
        self.ups = ups  # [scale depth-1 .. 0] -> upconv2 LayerParams
        self.dec = dec  # [scale depth-1 .. 0] -> list of conv3 LayerParams
        self.head = head  # conv1 LayerParams

    def layers(self):
        for bi, branch in enumerate(self.enc):
            for s, block in enumerate(branch):
                for ci, lp in enumerate(block):
                    yield f"enc.b{bi}.s{s}.c{ci}", lp
        for bi, block in enumerate(self.bott):
            for ci, lp in enumerate(block):
                yield f"bott.b{bi}.c{ci}", lp
        for di, lp in enumerate(self.ups):
            yield f"dec.u{di}", lp
        for di, block in enumerate(self.dec):
            for ci, lp in enumerate(block):
                yield f"dec.d{di}.c{ci}", lp
        yield "head", self.head

    def parameters(self) -> list[Tensor]:
        out = []
        for _, lp in self.layers():
            out.extend(lp.tensors())
        return out

    def named_arrays(self):
        for name, lp in self.layers():
            yield f"{name}.w", lp.weight.data
            yield f"{name}.b", lp.bias.data

    def zero_grad(self):
        for _, lp in self.layers():
            lp.zero_grad()

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.parameters())

    def astype(self, dtype):
        for _, lp in self.layers():
            lp.weight.data = lp.weight.data.astype(dtype)
            lp.bias.data = lp.bias.data.astype(dtype)
        return self

    def save(self, path, extra_config: dict | None = None):
        config = {"unet": self.config.to_dict()}
        if extra_config:
            config.update(extra_config)
        ckpt.save_params(path, config, self.named_arrays())


def build_model(config: UNetConfig, seed: int) -> Model:
    """Instantiate the network deterministically from a seed.

    Conv weights are He-normal, biases zero.  Channel bookkeeping is
    asserted while building: each decoder block consumes the upsampled
    features plus every branch's skip features at that scale.
    """
    rng = np.random.default_rng(seed)
    bw = config.base_width
    n = len(config.branches)
    cpb = config.convs_per_block

    def conv_block(c_in, c_out):
        block = [_he_conv(rng, "conv3", c_in, c_out, 3, 3)]
        for _ in range(cpb - 1):
            block.append(_he_conv(rng, "conv3", c_out, c_out, 3, 3))
        return block

    enc = []
    for branch in config.branches:
        scales = []
        c_in = branch.in_channels
        for s in range(config.depth):
            width = bw * 2**s
            scales.append(conv_block(c_in, width))
            c_in = width
        enc.append(scales)

    bott_width = bw * 2**config.depth
    bott = [conv_block(bw * 2 ** (config.depth - 1), bott_width) for _ in range(n)]

    ups = []
    dec = []
    current = n * bott_width
    for s in range(config.depth - 1, -1, -1):
        up_out = n * bw * 2**s
        ups.append(_he_conv(rng, "upconv2", current, up_out, 2, 2))
        skip_sum = sum(bw * 2**s for _ in range(n))
        merged = up_out + skip_sum
        assert merged == 2 * n * bw * 2**s, "decoder channel bookkeeping broken"
        dec.append(conv_block(merged, up_out))
        current = up_out

    head = _he_conv(rng, "conv1", current, 2, 1, 1)
    return Model(config, enc, bott, ups, dec, head)


def _block_forward(x, block):
    cache = []
    for lp in block:
        pre = conv2d(x, lp.weight.data, lp.bias.data)
        cache.append((x, pre))
        x = relu(pre)
    return x, cache


def _block_backward(dy, block, cache, need_input_grad=True):
    last = len(block) - 1
    for i, (lp, (x, pre)) in enumerate(zip(reversed(block), reversed(cache))):
        dy = relu_backward(dy, pre)
        need_dx = need_input_grad or i < last
        dx, dw, db = conv2d_backward(dy, x, lp.weight.data, need_dx=need_dx)
        lp.weight.grad += dw
        lp.bias.grad += db
        dy = dx
    return dy


def _check_inputs(model, inputs):
    names = model.config.branch_names
    if tuple(inputs.keys()) != names:
        raise ConfigurationError(
            f"model branches {names} do not match inputs {tuple(inputs.keys())}"
        )
    geom = None
    for name, spec in zip(names, model.config.branches):
        x = inputs[name]
        if x.ndim != 4 or x.shape[-1] != spec.in_channels:
            raise ConfigurationError(
                f"branch {name} expects (B,H,W,{spec.in_channels}), got {x.shape}"
            )
        if geom is None:
            geom = x.shape[1:3]
        elif x.shape[1:3] != geom:
            raise ConfigurationError("branch inputs must share one geometry")
    div = 2**model.config.depth
    if geom[0] % div or geom[1] % div:
        raise ConfigurationError(
            f"spatial dims {geom} must be divisible by 2**depth = {div}"
        )


def forward_logits(model: Model, inputs: dict):
    """Run the network on per-branch channels-last (B,H,W,C) batches.

    Returns (logits, cache); the cache is consumed by :func:`backward`.
    """
    _check_inputs(model, inputs)
    depth = model.config.depth
    skips = []  # [branch][scale]
    pools = []  # [branch][scale] argmax indices and shapes
    enc_caches = []
    bott_caches = []
    bott_outs = []

    for bi, name in enumerate(model.config.branch_names):
        x = inputs[name]
        branch_skips, branch_pools, branch_caches = [], [], []
        for s in range(depth):
            x, cache = _block_forward(x, model.enc[bi][s])
            branch_caches.append(cache)
            branch_skips.append(x)
            y, idx = maxpool2(x)
            branch_pools.append((idx, x.shape))
            x = y
        out, cache = _block_forward(x, model.bott[bi])
        bott_caches.append(cache)
        bott_outs.append(out)
        skips.append(branch_skips)
        pools.append(branch_pools)
        enc_caches.append(branch_caches)

    x = concat_channels(bott_outs)
    bott_sizes = [t.shape[-1] for t in bott_outs]

    dec_caches = []
    for di, s in enumerate(range(depth - 1, -1, -1)):
        lp = model.ups[di]
        up_in = x
        x = upconv2(x, lp.weight.data, lp.bias.data)
        scale_skips = [skips[bi][s] for bi in range(len(model.enc))]
        merged = concat_channels([x] + scale_skips)
        sizes = [x.shape[-1]] + [t.shape[-1] for t in scale_skips]
        x, block_cache = _block_forward(merged, model.dec[di])
        dec_caches.append((up_in, sizes, block_cache))

    head_in = x
    logits = conv1x1(x, model.head.weight.data, model.head.bias.data)
    cache = {
        "enc": enc_caches,
        "pools": pools,
        "bott": bott_caches,
        "bott_sizes": bott_sizes,
        "dec": dec_caches,
        "head_in": head_in,
    }
    return logits, cache


def backward(model: Model, dlogits, cache):
    """Accumulate parameter gradients for an upstream logits gradient."""
    dx, dw, db = conv1x1_backward(dlogits, cache["head_in"], model.head.weight.data)
    model.head.weight.grad += dw
    model.head.bias.grad += db

    depth = model.config.depth
    n = len(model.enc)
    dskips = [[None] * depth for _ in range(n)]

    # Decoder, shallow to deep (reverse of execution order).
    for di in range(depth - 1, -1, -1):
        s = depth - 1 - di  # the spatial scale this decoder step ran at
        up_in, sizes, block_cache = cache["dec"][di]
        dmerged = _block_backward(dx, model.dec[di], block_cache)
        parts = split_channels(dmerged, sizes)
        dup = parts[0]
        for bi in range(n):
            dskips[bi][s] = parts[1 + bi]
        lp = model.ups[di]
        dx, dw, db = upconv2_backward(dup, up_in, lp.weight.data)
        lp.weight.grad += dw
        lp.bias.grad += db

    dbott = split_channels(dx, cache["bott_sizes"])
    for bi in range(n):
        d = _block_backward(dbott[bi], model.bott[bi], cache["bott"][bi])
        for s in range(depth - 1, -1, -1):
            idx, shape = cache["pools"][bi][s]
            d = maxpool2_backward(d, idx, shape)
            d = d + dskips[bi][s]
            d = _block_backward(
                d, model.enc[bi][s], cache["enc"][bi][s], need_input_grad=s > 0
            )
    return None


def loss_and_gradients(model: Model, inputs: dict, labels, weights):
    """Forward, weighted cross-entropy, and full backward pass.

    Gradients accumulate into the model's parameter buffers (call
    ``model.zero_grad()`` first for a fresh step).  Returns the loss.
    """
    logits, cache = forward_logits(model, inputs)
    loss, dlogits = weighted_cross_entropy(logits, labels, weights)
    backward(model, dlogits, cache)
    return loss


def _planes_to_inputs(planes: PixelPlaneSet) -> dict:
    return {e.name: e.data.transpose(1, 2, 0)[None] for e in planes.entries}


def forward(model: Model, planes: PixelPlaneSet) -> np.ndarray:
    """Glare probability map (H, W) for a single plane set."""
    logits, _ = forward_logits(model, _planes_to_inputs(planes))
    return softmax2(logits)[0, :, :, 1]


def forward_batch(model: Model, inputs: dict) -> np.ndarray:
    """Glare probability maps (B, H, W) for per-branch batches."""
    logits, _ = forward_logits(model, inputs)
    return softmax2(logits)[..., 1]


def load_model(path):
    """Rebuild a model from a checkpoint; returns (model, embedded config)."""
    config, arrays = ckpt.load_params(path)
    unet_cfg = UNetConfig.from_dict(config["unet"])
    model = build_model(unet_cfg, seed=0)
    expected = dict(model.named_arrays())
    if set(expected) != set(arrays):
        raise ConfigurationError(f"checkpoint parameters do not match config in {path}")
    for name, arr in arrays.items():
        if arr.shape != expected[name].shape:
            raise ConfigurationError(f"shape mismatch for {name} in {path}")
    for name, lp in model.layers():
        lp.weight.data = arrays[f"{name}.w"].astype(np.float32)
        lp.bias.data = arrays[f"{name}.b"].astype(np.float32)
    return model, config
