import numpy as np
import pytest

from glarekit.config import TrainConfig
from glarekit.data import SamplePair, synthesize_glare
from glarekit.errors import TrainingDiverged
from glarekit.evaluation import (
    RepresentationCache,
    class_weights,
    cross_validate,
    evaluate,
    make_folds,
    predict_mask,
    train_fold,
)
from glarekit.representations import ContrastParams
from glarekit.unet import forward_batch


def _tiny_config(**overrides):
    base = dict(
        combo_id="RGB",
        depth=1,
        base_width=2,
        optimizer="adam",
        learning_rate=1e-3,
        epochs=1,
        batch_size=4,
        seed=0,
        folds=2,
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestMakeFolds:
    def test_eight_fold_two_hundred(self):
        folds = make_folds(list(range(200)), 8, seed=0)
        assert len(folds) == 8
        assert all(len(val) == 25 for _, val in folds)
        assert all(len(train) == 175 for train, _ in folds)

    def test_partition_properties(self):
        items = list(range(10))
        folds = make_folds(items, 3, seed=1)
        sizes = [len(val) for _, val in folds]
        assert sorted(sizes) == [3, 3, 4]
        seen = [x for _, val in folds for x in val]
        assert sorted(seen) == items
        for train, val in folds:
            assert set(train).isdisjoint(val)
            assert sorted(train + val) == items

    def test_leave_one_out(self):
        folds = make_folds(list(range(5)), 5, seed=0)
        assert all(len(val) == 1 for _, val in folds)

    def test_seed_determinism(self):
        a = make_folds(list(range(30)), 4, seed=9)
        b = make_folds(list(range(30)), 4, seed=9)
        assert [v for _, v in a] == [v for _, v in b]
        c = make_folds(list(range(30)), 4, seed=10)
        assert [v for _, v in a] != [v for _, v in c]

    def test_too_many_folds_rejected(self):
        with pytest.raises(ValueError):
            make_folds([1, 2], 3, seed=0)


class TestClassWeights:
    def test_balanced_mask_is_uniform(self):
        mask = np.repeat([0, 1], 8).reshape(4, 4)
        np.testing.assert_allclose(class_weights(mask), 1.0)

    def test_ten_percent_glare(self):
        mask = np.zeros((10, 10), dtype=np.uint8)
        mask[0] = 1
        w = class_weights(mask)
        assert w[mask == 1][0] == pytest.approx(5.0)
        assert w[mask == 0][0] == pytest.approx(5.0 / 9.0)

    def test_single_class_is_uniform_one(self):
        np.testing.assert_array_equal(class_weights(np.zeros((4, 4))), 1.0)
        np.testing.assert_array_equal(class_weights(np.ones((4, 4))), 1.0)

    def test_expected_weight_is_one(self, rng):
        for _ in range(10):
            mask = (rng.uniform(size=(16, 16)) < rng.uniform(0.05, 0.95)).astype(np.uint8)
            if mask.min() == mask.max():
                continue
            assert class_weights(mask).mean() == pytest.approx(1.0)


class TestTrainFold:
    def test_zero_learning_rate_is_inert(self):
        samples = synthesize_glare(1, 4, (32, 32))
        cfg = _tiny_config(optimizer="sgd", learning_rate=0.0, epochs=3, batch_size=4)
        cache = RepresentationCache(cfg.contrast)
        model, losses = train_fold(cfg, samples, cache=cache)
        fresh = train_fold(_tiny_config(epochs=0), samples, cache=cache)[0]
        for (_, lp), (_, lq) in zip(model.layers(), fresh.layers()):
            np.testing.assert_array_equal(lp.weight.data, lq.weight.data)
        assert len(set(losses)) == 1  # full-batch steps all see the same data

    def test_loss_drops_tenfold_on_desk_profile(self):
        samples = synthesize_glare(11, 4, (64, 64))
        cfg = _tiny_config(depth=2, base_width=8, epochs=60, batch_size=4)
        model, losses = train_fold(cfg, samples)
        assert losses[-1] < losses[0] / 10.0

    def test_same_seed_bitwise_identical(self):
        samples = synthesize_glare(2, 4, (32, 32))
        cfg = _tiny_config(epochs=2)
        a, la = train_fold(cfg, samples, fold_seed=3)
        b, lb = train_fold(cfg, samples, fold_seed=3)
        assert la == lb
        for (_, lp), (_, lq) in zip(a.layers(), b.layers()):
            assert np.array_equal(lp.weight.data, lq.weight.data)
            assert np.array_equal(lp.bias.data, lq.bias.data)

    def test_divergence_aborts_with_diagnostic(self):
        samples = synthesize_glare(2, 4, (32, 32))
        cfg = _tiny_config(optimizer="sgd", learning_rate=1e18, epochs=30)
        with pytest.raises(TrainingDiverged):
            train_fold(cfg, samples)

    def test_empty_split_rejected(self):
        with pytest.raises(ValueError):
            train_fold(_tiny_config(), [])


class TestEvaluate:
    def test_prediction_equal_to_truth_scores_ones(self):
        samples = synthesize_glare(4, 3, (32, 32))
        cfg = _tiny_config(epochs=0)
        cache = RepresentationCache(cfg.contrast)
        model, _ = train_fold(cfg, samples, cache=cache)
        relabeled = []
        for s in samples:
            prob = forward_batch(model, {"RGB": cache.get(s, ["RGB"])["RGB"][None]})[0]
            relabeled.append(SamplePair(s.id, s.image, predict_mask(model, prob)))
        summary = evaluate(model, relabeled, cache=cache)
        assert summary.precision_mean == 1.0
        assert summary.recall_mean == 1.0
        assert summary.f1_mean == 1.0
        assert summary.accuracy_mean == 1.0
        assert summary.f1_std == 0.0

    def test_order_invariance(self):
        samples = synthesize_glare(4, 4, (32, 32))
        cfg = _tiny_config(epochs=1)
        cache = RepresentationCache(cfg.contrast)
        model, _ = train_fold(cfg, samples, cache=cache)
        a = evaluate(model, samples, cache=cache)
        b = evaluate(model, list(reversed(samples)), cache=cache)
        assert a.as_dict() == b.as_dict()

    def test_empty_split_rejected(self):
        cfg = _tiny_config(epochs=0)
        model, _ = train_fold(cfg, synthesize_glare(1, 1, (32, 32)))
        with pytest.raises(ValueError):
            evaluate(model, [], contrast_params=ContrastParams())


class TestCrossValidate:
    def test_identical_data_and_zero_steps_give_identical_folds(self):
        base = synthesize_glare(1, 1, (32, 32))[0]
        clones = [SamplePair(f"clone_{i}", base.image, base.mask) for i in range(6)]
        cfg = _tiny_config(epochs=0, folds=3)
        result = cross_validate(cfg, clones)
        dicts = [f.summary.as_dict() for f in result.folds]
        assert all(d == dicts[0] for d in dicts)

    def test_pooling_is_per_image_not_per_fold(self):
        samples = synthesize_glare(8, 5, (32, 32))
        cfg = _tiny_config(epochs=0, folds=2)  # unequal blocks: 3 and 2
        result = cross_validate(cfg, samples)
        per_image = [m.f1 for f in result.folds for m in f.summary.per_image]
        assert result.pooled.n_images == 5
        assert result.pooled.f1_mean == pytest.approx(np.mean(per_image))
        # on unequal folds the two aggregations genuinely differ
        from glarekit.metrics import MetricSummary, PixelConfusion, image_metrics

        fold_a = [image_metrics(PixelConfusion(0, 5, 5, 0))] * 3  # f1 = 0
        fold_b = [image_metrics(PixelConfusion(5, 0, 0, 5))] * 2  # f1 = 1
        pooled = MetricSummary.from_images(fold_a + fold_b)
        fold_means = [
            MetricSummary.from_images(fold_a).f1_mean,
            MetricSummary.from_images(fold_b).f1_mean,
        ]
        assert pooled.f1_mean == pytest.approx(0.4)
        assert np.mean(fold_means) == pytest.approx(0.5)

    def test_deterministic(self):
        samples = synthesize_glare(3, 6, (32, 32))
        cfg = _tiny_config(epochs=1, folds=2)
        a = cross_validate(cfg, samples)
        b = cross_validate(cfg, samples)
        assert a.pooled.as_dict() == b.pooled.as_dict()

    def test_parallel_jobs_match_serial(self):
        samples = synthesize_glare(3, 6, (32, 32))
        cfg = _tiny_config(epochs=1, folds=2)
        serial = cross_validate(cfg, samples, jobs=1)
        parallel = cross_validate(cfg, samples, jobs=2)
        assert serial.pooled.as_dict() == parallel.pooled.as_dict()
