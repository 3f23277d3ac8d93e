"""Layer operations with analytic forward and backward passes.

Activations are channels-last ``(B, H, W, C)`` numpy arrays; this keeps
the im2col gather and the GEMM output contiguous, which is what makes
CPU training viable.  Weights keep the conventional layouts:
``(C_out, C_in, kh, kw)`` for convolutions and ``(C_in, C_out, 2, 2)``
for the transposed convolution.

The ops are dtype-preserving: training runs them in float32, gradient
checks in float64.  Shape errors raise :class:`ConfigurationError`.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError

try:  # JIT-fused conv kernels; the numpy im2col path is the reference fallback
    import os

    # workqueue is the fork-safe threading layer; the BLAS underneath the
    # per-row np.dot must stay single-threaded or it thrashes against the
    # row-level parallelism (limits applied after the kernels first run,
    # once every BLAS library is actually loaded).
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    import numba
    from numba import njit, prange

    @njit(parallel=True, cache=True)
    def _conv3_forward_nb(xp, wmat, bias, y, h, w):
        """y[b,i,j,:] = patches(b,i,j) @ wmat + bias, one image row at a time.

        The per-row patch matrix stays cache-resident, so DRAM traffic is
        one read of x and one write of y.
        """
        b_n = xp.shape[0]
        c = xp.shape[3]
        for bi in prange(b_n * h):
            b = bi // h
            i = bi % h
            cols = np.empty((w, 9 * c), dtype=xp.dtype)
            for j in range(w):
                k = 0
                for u in range(3):
                    for v in range(3):
                        for ch in range(c):
                            cols[j, k] = xp[b, i + u, j + v, ch]
                            k += 1
            y[b, i] = np.dot(cols, wmat) + bias

    @njit(parallel=True, cache=True)
    def _conv3_dw_nb(xp, dy, dw_partial, h, w):
        """Per-thread partial weight gradients: dw += patches^T @ dy, rowwise."""
        b_n = xp.shape[0]
        c = xp.shape[3]
        for bi in prange(b_n * h):
            b = bi // h
            i = bi % h
            colsT = np.empty((9 * c, w), dtype=xp.dtype)
            for j in range(w):
                k = 0
                for u in range(3):
                    for v in range(3):
                        for ch in range(c):
                            colsT[k, j] = xp[b, i + u, j + v, ch]
                            k += 1
            dw_partial[numba.get_thread_id()] += np.dot(colsT, dy[b, i])

    def _warmup():
        xp = np.zeros((1, 4, 4, 2), dtype=np.float32)
        wmat = np.zeros((18, 2), dtype=np.float32)
        y = np.empty((1, 2, 2, 2), dtype=np.float32)
        _conv3_forward_nb(xp, wmat, np.zeros(2, dtype=np.float32), y, 2, 2)
        partial = np.zeros((numba.get_num_threads(), 18, 2), dtype=np.float32)
        _conv3_dw_nb(xp, y, partial, 2, 2)

    _warmup()
    try:
        from threadpoolctl import threadpool_limits

        _BLAS_LIMITER = threadpool_limits(limits=1, user_api="blas")
    except ImportError:  # pragma: no cover
        _BLAS_LIMITER = None

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


# Transient pad buffers are pooled per (shape, dtype): the allocator
# otherwise returns them to the OS after every call and the refaulting
# dominates the math.  Single-owner per process, matching the training
# concurrency contract.
_SCRATCH: dict = {}


def _scratch(shape, dtype):
    key = (shape, np.dtype(dtype).str)
    buf = _SCRATCH.get(key)
    if buf is None:
        buf = np.empty(shape, dtype=dtype)
        _SCRATCH[key] = buf
    return buf


def _padded(x):
    b, h, w, c = x.shape
    xp = _scratch((b, h + 2, w + 2, c), x.dtype)
    xp[:, 1:-1, 1:-1, :] = x
    xp[:, 0, :, :] = 0
    xp[:, -1, :, :] = 0
    xp[:, 1:-1, 0, :] = 0
    xp[:, 1:-1, -1, :] = 0
    return xp


def _im2col3(x):
    """3x3 patches of a zero-padded (B,H,W,C) input as a (B*H*W, 9*C) matrix."""
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    # (B,H,W,C,3,3) -> (B,H,W,3,3,C): flattening then keeps channel runs contiguous
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(b * h * w, 9 * c)


def _kernel_matrix(weight):
    """(C_out, C_in, 3, 3) -> (9*C_in, C_out) matching the im2col layout."""
    co, ci = weight.shape[:2]
    return weight.transpose(2, 3, 1, 0).reshape(9 * ci, co)


def conv2d(x, weight, bias):
    """3x3 cross-correlation, stride 1, zero padding 1 (same-size output).

    ``weight`` is (C_out, C_in, 3, 3), ``bias`` is (C_out,).
    """
    b, h, w, c = x.shape
    co, ci, kh, kw = weight.shape
    if ci != c or (kh, kw) != (3, 3):
        raise ConfigurationError(
            f"conv2d weight {weight.shape} incompatible with input {x.shape}"
        )
    wmat = _kernel_matrix(weight).astype(x.dtype, copy=False)
    if _HAVE_NUMBA:
        y = np.empty((b, h, w, co), dtype=x.dtype)
        _conv3_forward_nb(_padded(x), wmat, bias.astype(x.dtype, copy=False), y, h, w)
        return y
    out = _im2col3(x) @ wmat
    out += bias
    return out.reshape(b, h, w, co)


def conv2d_backward(dy, x, weight, need_dx=True):
    """Gradients of conv2d w.r.t. input, weight and bias.

    dx is itself a 3x3 same-padding cross-correlation of dy with the
    spatially flipped, channel-transposed kernels; pass ``need_dx=False``
    to skip it for the first layer of a network.
    """
    b, h, w, co = dy.shape
    ci = weight.shape[1]
    if _HAVE_NUMBA:
        dy = np.ascontiguousarray(dy)
        partial = np.zeros((numba.get_num_threads(), 9 * ci, co), dtype=x.dtype)
        _conv3_dw_nb(_padded(x), dy, partial, h, w)
        dw = partial.sum(axis=0).reshape(3, 3, ci, co).transpose(3, 2, 0, 1)
    else:
        dy_mat = dy.reshape(b * h * w, co)
        dw = (dy_mat.T @ _im2col3(x)).reshape(co, 3, 3, ci).transpose(0, 3, 1, 2)
    db = dy.sum(axis=(0, 1, 2))
    dx = None
    if need_dx:
        w_flip = weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        dx = conv2d(dy, np.ascontiguousarray(w_flip), np.zeros(ci, dtype=dy.dtype))
    return dx, dw, db


def conv1x1(x, weight, bias):
    """1x1 projection. ``weight`` is (C_out, C_in, 1, 1)."""
    co, ci = weight.shape[:2]
    if ci != x.shape[-1]:
        raise ConfigurationError(
            f"conv1x1 weight {weight.shape} incompatible with input {x.shape}"
        )
    return x @ weight.reshape(co, ci).T + bias


def conv1x1_backward(dy, x, weight):
    co, ci = weight.shape[:2]
    dx = dy @ weight.reshape(co, ci)
    dw = np.tensordot(dy, x, axes=([0, 1, 2], [0, 1, 2])).reshape(weight.shape)
    db = dy.sum(axis=(0, 1, 2))
    return dx, dw, db


def relu(x):
    return np.maximum(x, 0)


def relu_backward(dy, x):
    return dy * (x > 0)


def _pool_windows(x):
    b, h, w, c = x.shape
    win = x.reshape(b, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    return win.reshape(b, h // 2, w // 2, 4, c)


def maxpool2(x):
    """2x2 max pooling, stride 2.

    Returns (output, argmax) where argmax in 0..3 indexes the window in
    row-major order; ties resolve to the first occurrence.
    """
    b, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ConfigurationError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    win = _pool_windows(x)
    idx = win.argmax(axis=3)
    y = np.take_along_axis(win, idx[:, :, :, None], axis=3)[:, :, :, 0]
    return y, idx


def maxpool2_backward(dy, idx, in_shape):
    b, h, w, c = in_shape
    win = np.zeros((b, h // 2, w // 2, 4, c), dtype=dy.dtype)
    np.put_along_axis(win, idx[:, :, :, None], dy[:, :, :, None], axis=3)
    win = win.reshape(b, h // 2, w // 2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    return win.reshape(in_shape)


def upconv2(x, weight, bias):
    """2x2 transposed convolution with stride 2, doubling spatial dims.

    ``weight`` is (C_in, C_out, 2, 2).  Stride equals kernel size, so
    output blocks do not overlap.
    """
    b, h, w, c = x.shape
    ci, co = weight.shape[:2]
    if ci != c:
        raise ConfigurationError(
            f"upconv2 weight {weight.shape} incompatible with input {x.shape}"
        )
    t = np.tensordot(x, weight, axes=([3], [0]))  # (B,H,W,Co,2,2)
    y = t.transpose(0, 1, 4, 2, 5, 3).reshape(b, 2 * h, 2 * w, co)
    return y + bias


def upconv2_backward(dy, x, weight):
    b, h2, w2, co = dy.shape
    h, w = h2 // 2, w2 // 2
    dt = dy.reshape(b, h, 2, w, 2, co).transpose(0, 1, 3, 5, 2, 4)  # (B,H,W,Co,2,2)
    dx = np.tensordot(dt, weight, axes=([3, 4, 5], [1, 2, 3]))
    dw = np.tensordot(x, dt, axes=([0, 1, 2], [0, 1, 2]))
    db = dy.sum(axis=(0, 1, 2))
    return dx, dw, db


def concat_channels(inputs):
    """Channel-axis concatenation in argument order."""
    shapes = {t.shape[:3] for t in inputs}
    if len(shapes) != 1:
        raise ConfigurationError(f"concat_channels got mismatched geometries {shapes}")
    return np.concatenate(list(inputs), axis=-1)


def split_channels(dy, sizes):
    """Inverse of concat_channels: slice dy back into per-input chunks."""
    out = []
    start = 0
    for s in sizes:
        out.append(dy[..., start : start + s])
        start += s
    return out


def softmax2(logits):
    """Per-pixel softmax over the 2 class channels of (B,H,W,2) logits."""
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=-1, keepdims=True)


def weighted_cross_entropy(logits, labels, weights):
    """Per-pixel weighted two-class cross-entropy, averaged over pixels.

    ``logits`` is (B,H,W,2), ``labels`` is (B,H,W) in {0,1}, ``weights``
    is (B,H,W) positive.  Returns (loss, dloss/dlogits).
    """
    if logits.shape[-1] != 2:
        raise ConfigurationError(f"expected 2 class channels, got {logits.shape}")
    if labels.shape != weights.shape or labels.shape != logits.shape[:3]:
        raise ConfigurationError(
            f"shape mismatch: logits {logits.shape}, labels {labels.shape}, weights {weights.shape}"
        )
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse  # (B,H,W,2)

    lab = labels.astype(np.int64)
    picked = np.take_along_axis(logp, lab[..., None], axis=-1)[..., 0]
    n = labels.size
    loss = float((weights * -picked).sum() / n)

    p = np.exp(logp)
    onehot = np.zeros_like(p)
    np.put_along_axis(onehot, lab[..., None], 1.0, axis=-1)
    dlogits = (p - onehot) * weights[..., None] / n
    return loss, dlogits.astype(logits.dtype)
