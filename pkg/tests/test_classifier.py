import numpy as np
import pytest

from polsarseg.classifier import (TrainConfig, TrainingSet, cross_validate,
                                  fit_logistic, load_model,
                                  predict_probabilities, sample_training_set,
                                  save_model, train)
from polsarseg.core import FeatureCube, LabelMap


def blob_features(rng, h, w, n_classes, spread=4.0):
    """(features, labels): per-class Gaussian blobs, fully labeled."""
    labels = rng.integers(1, n_classes + 1, size=(h, w)).astype(np.uint8)
    centers = rng.normal(size=(n_classes, 3)) * spread
    data = centers[labels - 1] + rng.normal(size=(h, w, 3))
    return FeatureCube(data), LabelMap(labels, n_classes)


class TestSampling:
    def test_fraction_of_fully_labeled_grid(self):
        labels = LabelMap(np.tile(np.array([1, 2], dtype=np.uint8), (100, 50)), 2)
        ts = sample_training_set(labels, TrainConfig(train_fraction=0.01))
        assert ts.indices.size == 100  # 1% of 10,000
        assert np.all(labels.labels.ravel()[ts.indices] == ts.labels)
        assert set(np.unique(ts.labels)) == {1, 2}

    def test_every_class_represented_even_when_rare(self):
        arr = np.ones((40, 40), dtype=np.uint8)
        arr[0, 0] = 2  # single pixel of class 2
        ts = sample_training_set(LabelMap(arr, 2), TrainConfig(train_fraction=0.01))
        assert 2 in ts.labels

    def test_indices_sorted_unique_and_labeled_only(self):
        arr = np.zeros((30, 30), dtype=np.uint8)
        arr[:, :10] = 1
        arr[:, 10:20] = 2
        ts = sample_training_set(LabelMap(arr, 2), TrainConfig(train_fraction=0.2))
        assert np.all(np.diff(ts.indices) > 0)
        assert np.all(arr.ravel()[ts.indices] != 0)

    def test_full_fraction_takes_every_labeled_pixel(self):
        arr = np.array([[0, 1], [2, 1]], dtype=np.uint8)
        ts = sample_training_set(LabelMap(arr, 2), TrainConfig(train_fraction=1.0))
        assert ts.indices.tolist() == [1, 2, 3]

    def test_deterministic_per_seed(self):
        labels = LabelMap(np.tile(np.array([1, 2], dtype=np.uint8), (64, 32)), 2)
        a = sample_training_set(labels, TrainConfig(rng_seed=9))
        b = sample_training_set(labels, TrainConfig(rng_seed=9))
        c = sample_training_set(labels, TrainConfig(rng_seed=10))
        assert np.array_equal(a.indices, b.indices)
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()

    def test_unlabeled_class_rejected(self):
        arr = np.ones((4, 4), dtype=np.uint8)
        with pytest.raises(ValueError, match="class 2"):
            sample_training_set(LabelMap(arr, 2), TrainConfig())

    def test_no_labeled_pixels_rejected(self):
        arr = np.zeros((4, 4), dtype=np.uint8)
        with pytest.raises(ValueError, match="no labeled"):
            sample_training_set(LabelMap(arr, 1), TrainConfig())


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="train_fraction"):
            TrainConfig(train_fraction=0.0)
        with pytest.raises(ValueError, match="cv_samples"):
            TrainConfig(cv_samples=3, cv_folds=5)
        with pytest.raises(ValueError, match="reg_grid"):
            TrainConfig(reg_grid=())
        with pytest.raises(ValueError, match="reg_grid"):
            TrainConfig(reg_grid=(-1.0,))


class TestFitLogistic:
    def test_objective_monotone_and_separates(self):
        rng = np.random.default_rng(0)
        z = np.concatenate([rng.normal(size=(40, 2)) + (4, 0),
                            rng.normal(size=(40, 2)) - (4, 0)])
        y = np.array([1] * 40 + [2] * 40)
        w, b, history = fit_logistic(z, y, 2, lam=1e-3)
        assert np.all(np.diff(history) < 0)
        pred = np.argmax(z @ w.T + b, axis=1) + 1
        assert np.mean(pred == y) == 1.0

    def test_uninformative_feature_yields_class_frequencies(self):
        z = np.zeros((60, 1))
        y = np.array([1, 2] * 30)
        w, b, _ = fit_logistic(z, y, 2, lam=0.1)
        assert np.abs(w).max() < 1e-6
        p = np.exp(b) / np.exp(b).sum()
        np.testing.assert_allclose(p, [0.5, 0.5], atol=0.01)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(50, 4))
        y = rng.integers(1, 4, size=50)
        w1, b1, _ = fit_logistic(z, y, 3, lam=0.01)
        w2, b2, _ = fit_logistic(z, y, 3, lam=0.01)
        assert np.array_equal(w1, w2) and np.array_equal(b1, b2)

    def test_stronger_penalty_shrinks_weights(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(80, 3))
        y = (z[:, 0] > 0).astype(int) + 1
        w_soft, _, _ = fit_logistic(z, y, 2, lam=1e-4)
        w_hard, _, _ = fit_logistic(z, y, 2, lam=10.0)
        assert np.linalg.norm(w_hard) < np.linalg.norm(w_soft)


class TestCrossValidate:
    def test_ties_take_smallest_penalty(self):
        # linearly separable at any tiny penalty: accuracies tie at 1.0
        rng = np.random.default_rng(3)
        z = np.concatenate([rng.normal(size=(40, 2)) + (9, 0),
                            rng.normal(size=(40, 2)) - (9, 0)])
        y = np.array([1] * 40 + [2] * 40)
        cfg = TrainConfig(reg_grid=(1e-9, 1e-8), cv_samples=40, cv_folds=4)
        lam, table = cross_validate(z, y, 2, cfg)
        assert lam == 1e-9
        assert table[1e-9] == table[1e-8] == 1.0

    def test_single_entry_grid_skips_cv(self):
        lam, _ = cross_validate(np.zeros((2, 1)), np.array([1, 2]), 2,
                                TrainConfig(reg_grid=(0.5,)))
        assert lam == 0.5


class TestTrainPredict:
    def test_end_to_end_on_separable_blobs(self):
        rng = np.random.default_rng(4)
        feats, labels = blob_features(rng, 24, 24, 3)
        cfg = TrainConfig(train_fraction=0.5, cv_samples=40, cv_folds=4,
                          rng_seed=0)
        ts = sample_training_set(labels, cfg)
        model = train(feats, ts, cfg)
        probs = predict_probabilities(model, feats)
        pred = np.argmax(probs.probs, axis=2) + 1
        assert np.mean(pred == labels.labels) > 0.95
        sums = probs.probs.sum(axis=2)
        assert np.abs(sums - 1.0).max() <= 1e-6

    def test_zero_variance_channel_gets_unit_scale(self):
        rng = np.random.default_rng(5)
        feats, labels = blob_features(rng, 12, 12, 2)
        data = feats.data.copy()
        data[:, :, 1] = 7.0
        cfg = TrainConfig(train_fraction=1.0, reg_grid=(0.01,))
        ts = sample_training_set(labels, cfg)
        model = train(FeatureCube(data), ts, cfg)
        assert model.scale[1] == 1.0
        assert model.mean[1] == pytest.approx(7.0)

    def test_training_is_deterministic(self):
        rng = np.random.default_rng(6)
        feats, labels = blob_features(rng, 16, 16, 2)
        cfg = TrainConfig(train_fraction=0.3, cv_samples=30, cv_folds=3,
                          rng_seed=1)
        ts = sample_training_set(labels, cfg)
        m1 = train(feats, ts, cfg)
        m2 = train(feats, ts, cfg)
        assert np.array_equal(m1.weights, m2.weights)
        assert np.array_equal(m1.biases, m2.biases)

    def test_channel_mismatch_rejected(self):
        rng = np.random.default_rng(7)
        feats, labels = blob_features(rng, 10, 10, 2)
        cfg = TrainConfig(train_fraction=1.0, reg_grid=(0.1,))
        model = train(feats, sample_training_set(labels, cfg), cfg)
        with pytest.raises(ValueError, match="channels"):
            predict_probabilities(model, FeatureCube(np.zeros((4, 4, 9))))


class TestModelSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        feats, labels = blob_features(rng, 10, 10, 3)
        cfg = TrainConfig(train_fraction=1.0, reg_grid=(0.01,))
        model = train(feats, sample_training_set(labels, cfg), cfg)
        path = tmp_path / "m.plm"
        save_model(model, path)
        back = load_model(path)
        for attr in ("weights", "biases", "mean", "scale"):
            assert np.array_equal(getattr(back, attr), getattr(model, attr))
        probs_a = predict_probabilities(model, feats)
        probs_b = predict_probabilities(back, feats)
        assert np.array_equal(probs_a.probs, probs_b.probs)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.plm"
        path.write_bytes(b"XXXX" + bytes(8))
        with pytest.raises(ValueError, match="model file"):
            load_model(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "short.plm"
        path.write_bytes(b"PLM1" + np.array([2, 3], "<u4").tobytes() + bytes(8))
        with pytest.raises(ValueError, match="bytes"):
            load_model(path)


class TestTrainingSet:
    def test_requires_positive_labels(self):
        with pytest.raises(ValueError, match=">= 1"):
            TrainingSet(np.array([0, 1]), np.array([0, 1], dtype=np.uint8))

    def test_digest_reflects_content(self):
        a = TrainingSet(np.array([1, 2]), np.array([1, 1], dtype=np.uint8))
        b = TrainingSet(np.array([1, 3]), np.array([1, 1], dtype=np.uint8))
        assert a.digest() != b.digest()
