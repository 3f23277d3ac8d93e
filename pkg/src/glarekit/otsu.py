"""Otsu thresholding of probability maps.

Probabilities in [0, 1] are binned into 256 uniform bins (last bin
closed).  The returned threshold is the bin boundary b/256 that
maximizes between-class variance, smallest boundary on ties.  A map
whose pixels all fall into a single bin has no separable classes; the
threshold degenerates to 1.0, i.e. "no glare predicted".
"""

from __future__ import annotations

import numpy as np

N_BINS = 256


def histogram256(prob_map: np.ndarray) -> np.ndarray:
    """Counts over 256 uniform bins of [0, 1]; bin b covers
    [b/256, (b+1)/256), last bin closed."""
    p = np.asarray(prob_map, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("cannot histogram an empty map")
    idx = np.minimum((p * N_BINS).astype(np.int64), N_BINS - 1)
    return np.bincount(idx, minlength=N_BINS)


def otsu_threshold(prob_map: np.ndarray) -> float:
    """Threshold in [0, 1] maximizing between-class variance."""
    hist = histogram256(prob_map)
    total = hist.sum()

    counts = hist.astype(np.float64)
    csum = np.cumsum(counts)
    cmoment = np.cumsum(counts * np.arange(N_BINS))

    # Boundary T puts bins [0, T) in the background class; T ranges 0..255.
    w0 = np.concatenate(([0.0], csum[:-1]))
    m0 = np.concatenate(([0.0], cmoment[:-1]))
    w1 = total - w0
    m1 = cmoment[-1] - m0

    mu0 = np.divide(m0, w0, out=np.zeros(N_BINS), where=w0 > 0)
    mu1 = np.divide(m1, w1, out=np.zeros(N_BINS), where=w1 > 0)
    sigma_b = np.where((w0 > 0) & (w1 > 0), w0 * w1 * (mu0 - mu1) ** 2, 0.0)

    if sigma_b.max() == 0.0:
        return 1.0
    return int(np.argmax(sigma_b)) / N_BINS


def binarize(prob_map: np.ndarray, threshold: float) -> np.ndarray:
    """Glare mask: pixel is glare iff its probability >= threshold."""
    return (np.asarray(prob_map) >= threshold).astype(np.uint8)
