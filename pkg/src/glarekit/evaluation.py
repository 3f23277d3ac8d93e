"""Training orchestration, k-fold cross-validation, and evaluation.

Seeding contract: the model initialization uses the config seed, so
every fold starts from identical weights; the per-fold seed
(``seed + fold_index``) drives only the batch shuffling.  Two runs with
the same config, seed and data are bitwise identical.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .data import SamplePair
from .errors import TrainingDiverged
from .metrics import ImageMetrics, MetricSummary, PixelConfusion, image_metrics
from .nn import AdamState, adam_step, sgd_step
from .otsu import binarize, otsu_threshold
from .representations import compute_planes, parse_combo
from .unet import Model, build_model, forward_batch, loss_and_gradients


class RepresentationCache:
    """Per-sample representation planes, computed once and shared read-only."""

    def __init__(self, params):
        self.params = params
        self._planes: dict[str, dict[str, np.ndarray]] = {}

    def get(self, sample: SamplePair, names) -> dict[str, np.ndarray]:
        """Channels-last (H, W, C) float32 planes for the given names."""
        cached = self._planes.setdefault(sample.id, {})
        missing = [n for n in names if n not in cached]
        if missing:
            fresh = compute_planes(sample.image, missing, self.params)
            for name, plane in fresh.items():
                cached[name] = np.ascontiguousarray(
                    plane.transpose(1, 2, 0), dtype=np.float32
                )
        return {n: cached[n] for n in names}


def make_folds(samples, k: int, seed: int):
    """Seeded shuffle then contiguous partition into k validation blocks.

    Returns k (train, validation) pairs of sub-lists; the validation
    blocks are disjoint, cover the input, and differ in size by at most
    one.
    """
    n = len(samples)
    if k > n:
        raise ValueError(f"cannot make {k} folds from {n} samples")
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.random.default_rng(seed).permutation(n)
    base = n // k
    extra = n % k
    folds = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        val_idx = order[start : start + size]
        train_idx = np.concatenate([order[:start], order[start + size :]])
        folds.append(
            ([samples[j] for j in train_idx], [samples[j] for j in val_idx])
        )
        start += size
    return folds


def class_weights(mask: np.ndarray) -> np.ndarray:
    """Inverse-frequency weight map: each class gets n_total/(2*n_class).

    With one class absent the map is uniform 1.
    """
    mask = np.asarray(mask)
    n = mask.size
    n_glare = int(mask.sum())
    n_bg = n - n_glare
    if n_glare == 0 or n_bg == 0:
        return np.ones(mask.shape, dtype=np.float32)
    w_glare = n / (2.0 * n_glare)
    w_bg = n / (2.0 * n_bg)
    return np.where(mask > 0, w_glare, w_bg).astype(np.float32)


def _stack_inputs(samples, names, cache: RepresentationCache):
    planes = [cache.get(s, names) for s in samples]
    return {n: np.stack([p[n] for p in planes]) for n in names}


def train_fold(
    config: TrainConfig,
    train_samples,
    fold_seed: int | None = None,
    cache: RepresentationCache | None = None,
):
    """Train one model on one split; returns (model, per-step loss list)."""
    if not train_samples:
        raise ValueError("training split is empty")
    if cache is None:
        cache = RepresentationCache(config.contrast)
    names = parse_combo(config.combo_id)
    model = build_model(config.unet_config(), seed=config.seed)
    params = model.parameters()
    adam = AdamState.for_params(params) if config.optimizer == "adam" else None

    labels = {s.id: s.mask.astype(np.int64) for s in train_samples}
    weights = {s.id: class_weights(s.mask) for s in train_samples}

    rng = np.random.default_rng(config.seed if fold_seed is None else fold_seed)
    losses = []
    n = len(train_samples)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = [train_samples[j] for j in order[start : start + config.batch_size]]
            inputs = _stack_inputs(batch, names, cache)
            y = np.stack([labels[s.id] for s in batch])
            w = np.stack([weights[s.id] for s in batch])
            model.zero_grad()
            loss = loss_and_gradients(model, inputs, y, w)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at step {len(losses)} (combo {config.combo_id})"
                )
            if config.optimizer == "adam":
                adam_step(params, adam, config.learning_rate)
            else:
                sgd_step(params, config.learning_rate)
            losses.append(loss)
    return model, losses


def predict_mask(model: Model, prob_map: np.ndarray) -> np.ndarray:
    return binarize(prob_map, otsu_threshold(prob_map))


def evaluate(
    model: Model,
    samples,
    cache: RepresentationCache | None = None,
    contrast_params=None,
) -> MetricSummary:
    """Forward + Otsu + binarize each sample and summarize pixel metrics."""
    if not samples:
        raise ValueError("evaluation split is empty")
    if cache is None:
        if contrast_params is None:
            raise ValueError("need a RepresentationCache or contrast_params")
        cache = RepresentationCache(contrast_params)
    names = model.config.branch_names
    images = []
    for s in samples:
        inputs = _stack_inputs([s], names, cache)
        prob = forward_batch(model, inputs)[0]
        pred = predict_mask(model, prob)
        images.append(image_metrics(PixelConfusion.from_masks(pred, s.mask)))
    return MetricSummary.from_images(images)


@dataclass
class FoldResult:
    fold: int
    summary: MetricSummary
    losses: list[float]


@dataclass
class CrossValResult:
    pooled: MetricSummary
    folds: list[FoldResult]


def _run_one_fold(args, cache: RepresentationCache | None = None):
    config, fold_index, train_split, val_split = args
    if cache is None:
        cache = RepresentationCache(config.contrast)
    model, losses = train_fold(
        config, train_split, fold_seed=config.seed + fold_index, cache=cache
    )
    summary = evaluate(model, val_split, cache=cache)
    return FoldResult(fold_index, summary, losses)


def cross_validate(
    config: TrainConfig,
    samples,
    jobs: int = 1,
    cache: RepresentationCache | None = None,
) -> CrossValResult:
    """k-fold cross-validation; per-image metrics are pooled across folds
    before the mean/std are taken."""
    folds = make_folds(samples, config.folds, config.seed)
    tasks = [(config, i, tr, va) for i, (tr, va) in enumerate(folds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one_fold, tasks))
    else:
        if cache is None:
            cache = RepresentationCache(config.contrast)
        results = [_run_one_fold(t, cache=cache) for t in tasks]
    results.sort(key=lambda r: r.fold)
    pooled_images: list[ImageMetrics] = []
    for r in results:
        pooled_images.extend(r.summary.per_image)
    return CrossValResult(MetricSummary.from_images(pooled_images), results)
