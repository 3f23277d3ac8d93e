"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

# Coordinates where analytic and numeric gradients are both below this
# magnitude are compared against it instead of each other, so
# finite-difference noise around a true zero does not register as error.
_REL_FLOOR = 1e-6


def finite_diff_check(fn, args, grads, epsilon=1e-5, exclude=None) -> float:
    """Max relative error between analytic gradients and central differences.

    ``fn(*args)`` must return a scalar; ``grads[i]`` is the analytic
    gradient w.r.t. ``args[i]``.  Each coordinate is perturbed by
    ``epsilon * max(1, |x|)`` in double precision.  ``exclude`` may hold
    per-argument boolean masks marking coordinates to skip (kink-adjacent
    points of non-smooth ops).
    """
    args = [np.asarray(a, dtype=np.float64).copy() for a in args]
    max_rel = 0.0
    for i, (a, g) in enumerate(zip(args, grads)):
        g = np.asarray(g, dtype=np.float64)
        skip = None if exclude is None or exclude[i] is None else np.asarray(exclude[i])
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        sflat = None if skip is None else skip.reshape(-1)
        for j in range(flat.size):
            if sflat is not None and sflat[j]:
                continue
            x0 = flat[j]
            h = epsilon * max(1.0, abs(x0))
            flat[j] = x0 + h
            f_plus = fn(*args)
            flat[j] = x0 - h
            f_minus = fn(*args)
            flat[j] = x0
            num = (f_plus - f_minus) / (2.0 * h)
            diff = abs(num - gflat[j])
            if diff == 0.0:
                continue
            rel = diff / max(abs(num), abs(gflat[j]), _REL_FLOOR)
            if rel > max_rel:
                max_rel = rel
    return max_rel
