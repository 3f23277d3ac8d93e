"""Independent brute-force oracles the tests check the fast paths against.

Everything here is deliberately written as plain loops over definitions,
sharing no code with the implementations under test.
"""

import numpy as np


def windowed_stats_two_pass(l_plane, window_n, window_m, floor=10.0):
    """Per-pixel (std, mean, contrast) over clipped centered windows.

    Two passes per window: mean first, then squared deviations with a
    (count - 1) divisor.  window_n spans columns, window_m spans rows.
    """
    a = np.asarray(l_plane, dtype=np.float64)
    h, w = a.shape
    half_r = window_m // 2
    half_c = window_n // 2
    std = np.zeros((h, w))
    mean = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            win = a[
                max(0, y - half_r) : min(h - 1, y + half_r) + 1,
                max(0, x - half_c) : min(w - 1, x + half_c) + 1,
            ]
            m = win.mean()
            var = ((win - m) ** 2).sum() / (win.size - 1)
            std[y, x] = np.sqrt(var)
            mean[y, x] = m
    contrast = std / np.maximum(floor, mean)
    return std, mean, contrast


def otsu_exhaustive(prob_map):
    """Exhaustive 256-boundary search maximizing between-class variance.

    Same histogram convention as the implementation: bin b covers
    [b/256, (b+1)/256), last bin closed; smallest boundary wins ties;
    a single-bin map yields 1.0.
    """
    p = np.asarray(prob_map, dtype=np.float64).ravel()
    idx = np.minimum((p * 256).astype(np.int64), 255)
    hist = np.zeros(256, dtype=np.int64)
    for i in idx:
        hist[i] += 1

    best_t, best_v = 0, -1.0
    bins = np.arange(256, dtype=np.float64)
    for t in range(256):
        n0 = hist[:t].sum()
        n1 = hist[t:].sum()
        if n0 == 0 or n1 == 0:
            v = 0.0
        else:
            mu0 = float((hist[:t] * bins[:t]).sum()) / n0
            mu1 = float((hist[t:] * bins[t:]).sum()) / n1
            v = float(n0) * float(n1) * (mu0 - mu1) ** 2
        if v > best_v:
            best_v, best_t = v, t
    if best_v == 0.0:
        return 1.0
    return best_t / 256


def e2e_gradient_error(model, inputs, labels, weights, epsilon=1e-5):
    """Max relative error of all parameter gradients vs central differences.

    The loss is piecewise smooth; a coordinate whose probe flips any ReLU
    gate or pool argmax sits on a kink where the derivative is undefined,
    so such coordinates are skipped (they are outside the check's
    precondition).  Returns (max_rel_err, skipped, total).

    The model must already be float64 with gradients accumulated.
    """
    from glarekit.nn import weighted_cross_entropy
    from glarekit.unet import forward_logits

    params = model.parameters()
    grads = [p.grad.copy() for p in params]

    def eval_at():
        logits, cache = forward_logits(model, inputs)
        loss = weighted_cross_entropy(logits, labels, weights)[0]
        parts = []
        for branch in cache["enc"]:
            for block in branch:
                for _, pre in block:
                    parts.append((pre > 0).tobytes())
        for block in cache["bott"]:
            for _, pre in block:
                parts.append((pre > 0).tobytes())
        for branch_pools in cache["pools"]:
            for idx, _ in branch_pools:
                parts.append(idx.astype(np.int8).tobytes())
        for _, _, block_cache in cache["dec"]:
            for _, pre in block_cache:
                parts.append((pre > 0).tobytes())
        return loss, b"".join(parts)

    _, sig0 = eval_at()
    max_rel = 0.0
    skipped = 0
    total = 0
    for p, g in zip(params, grads):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            total += 1
            x0 = flat[j]
            h = epsilon * max(1.0, abs(x0))
            flat[j] = x0 + h
            f_plus, s_plus = eval_at()
            flat[j] = x0 - h
            f_minus, s_minus = eval_at()
            flat[j] = x0
            if s_plus != sig0 or s_minus != sig0:
                skipped += 1
                continue
            num = (f_plus - f_minus) / (2.0 * h)
            diff = abs(num - gflat[j])
            if diff:
                max_rel = max(max_rel, diff / max(abs(num), abs(gflat[j]), 1e-6))
    return max_rel, skipped, total


def count_unet_parameters(in_channels_per_branch, depth, base_width, convs_per_block=2):
    """Parameter count derived from the layer shape rules, counted by hand.

    Encoder scale s runs at width base_width*2**s per branch; the fused
    decoder runs at n*base_width*2**s; every conv is 3x3 with bias, the
    upsampler 2x2, the head 1x1 to 2 logits.
    """
    n = len(in_channels_per_branch)
    bw = base_width

    def conv(cin, cout, k):
        return cout * cin * k * k + cout

    def block(cin, cout):
        total = conv(cin, cout, 3)
        for _ in range(convs_per_block - 1):
            total += conv(cout, cout, 3)
        return total

    total = 0
    for cin in in_channels_per_branch:
        c = cin
        for s in range(depth):
            total += block(c, bw * 2**s)
            c = bw * 2**s
        total += block(c, bw * 2**depth)  # per-branch bottleneck block

    current = n * bw * 2**depth
    for s in range(depth - 1, -1, -1):
        up_out = n * bw * 2**s
        total += current * up_out * 4 + up_out  # 2x2 transposed conv
        total += block(up_out + n * bw * 2**s, up_out)
        current = up_out
    total += conv(current, 2, 1)  # head
    return total
