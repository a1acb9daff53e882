import math

import numpy as np
import pytest
from pydantic import ValidationError

from raincdf.errors import ShapeError, TrainingError
from raincdf.models.schemas import N_BINS, FeatureDataset, LogisticModel, SyntheticConfig, TrainConfig
from raincdf.predictors.baselines import HistogramPredictor
from raincdf.predictors.logistic import (
    LogisticPredictor, fit_logistic, label_classes, logistic_predict, nll_and_gradient,
    softmax_matrix, softmax_prob,
)
from raincdf.services.ingest import derive_dataset, generate_synthetic, split
from raincdf.services.scoring import score

NAMES = tuple(f"f{i}" for i in range(5))


def _data(rng, m=50, d=5, max_label=12.0):
    X = rng.normal(size=(m, d))
    y = np.floor(rng.uniform(0, max_label, m))
    return FeatureDataset(X=X, y=y, feature_names=NAMES[:d])


def _naive_softmax(theta, x):
    xa = np.append(x, 1.0)
    unnormalized = np.array([1.0] + [math.exp(row @ xa) for row in theta])
    return unnormalized / unnormalized.sum()


class TestSoftmax:
    def test_zero_theta_is_uniform(self):
        model = LogisticModel(theta=np.zeros((N_BINS - 1, 4)))
        np.testing.assert_allclose(softmax_prob(model, np.ones(3)), 1 / 70, rtol=1e-14)

    def test_binary_uniform(self):
        model = LogisticModel(theta=np.zeros((1, 2)))
        np.testing.assert_allclose(softmax_prob(model, np.array([3.0])), [0.5, 0.5])

    def test_matches_naive_formula(self, rng):
        for _ in range(20):
            theta = rng.normal(0.0, 0.3, (N_BINS - 1, 6))
            x = rng.normal(size=5)
            probs = softmax_prob(LogisticModel(theta=theta), x)
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)
            np.testing.assert_allclose(probs, _naive_softmax(theta, x), rtol=1e-10)

    def test_large_logits_do_not_overflow(self):
        theta = np.zeros((2, 2))
        theta[1, 1] = 1000.0
        probs = softmax_prob(LogisticModel(theta=theta), np.array([0.0]))
        np.testing.assert_allclose(probs, [0.0, 0.0, 1.0], atol=1e-300)

    def test_shift_invariance(self, rng):
        theta = rng.normal(0.0, 0.5, (4, 3))
        x = rng.normal(size=2)
        shifted = theta.copy()
        # Same shift on every non-reference bias moves the reference class only
        shifted[:, -1] += 2.0
        p = softmax_prob(LogisticModel(theta=theta), x)
        q = softmax_prob(LogisticModel(theta=shifted), x)
        np.testing.assert_allclose(q[1:] / q[1:].sum(), p[1:] / p[1:].sum(), rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            softmax_prob(LogisticModel(theta=np.zeros((3, 4))), np.ones(5))


class TestLikelihood:
    def test_zero_theta_loss_is_log_70(self, rng):
        model = LogisticModel(theta=np.zeros((N_BINS - 1, 6)))
        loss, _ = nll_and_gradient(model, _data(rng))
        assert loss == pytest.approx(math.log(70), abs=1e-10)

    def test_gradient_matches_finite_differences(self, rng):
        data = _data(rng)
        theta = rng.normal(0.0, 0.1, (N_BINS - 1, 6))
        _, grad = nll_and_gradient(LogisticModel(theta=theta), data, l1_lambda=0.0)

        h = 1e-5
        numeric = np.empty_like(theta)
        for idx in np.ndindex(theta.shape):
            plus, minus = theta.copy(), theta.copy()
            plus[idx] += h
            minus[idx] -= h
            f_plus, _ = nll_and_gradient(LogisticModel(theta=plus), data, l1_lambda=0.0)
            f_minus, _ = nll_and_gradient(LogisticModel(theta=minus), data, l1_lambda=0.0)
            numeric[idx] = (f_plus - f_minus) / (2 * h)
        np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-8)

    def test_l1_penalty_arithmetic(self, rng):
        data = _data(rng)
        theta = np.zeros((N_BINS - 1, 6))
        theta[3, 2] = 0.5
        model = LogisticModel(theta=theta)
        plain, _ = nll_and_gradient(model, data, l1_lambda=0.0)
        penalized, _ = nll_and_gradient(model, data, l1_lambda=1.0)
        assert penalized - plain == pytest.approx(0.5, abs=1e-12)

    def test_bias_is_not_penalized(self, rng):
        data = _data(rng)
        theta = np.zeros((N_BINS - 1, 6))
        theta[:, -1] = 0.7
        model = LogisticModel(theta=theta)
        plain, _ = nll_and_gradient(model, data, l1_lambda=0.0)
        penalized, _ = nll_and_gradient(model, data, l1_lambda=1.0)
        assert penalized == plain

    def test_empty_data(self):
        data = FeatureDataset(X=np.zeros((0, 2)), y=np.zeros(0), feature_names=("a", "b"))
        with pytest.raises(TrainingError):
            nll_and_gradient(LogisticModel(theta=np.zeros((N_BINS - 1, 3))), data)

    def test_label_classes(self):
        np.testing.assert_array_equal(label_classes(np.array([0.0, 0.2, 3.0, 68.5, 400.0])), [0, 1, 3, 69, 69])


class TestFitLogistic:
    def test_separable_two_class(self):
        x = np.concatenate([-np.arange(1.0, 26.0), np.arange(1.0, 26.0)])
        y = (x > 0).astype(float)
        data = FeatureDataset(X=x[:, np.newaxis], y=y, feature_names=("x",))
        model = fit_logistic(data, TrainConfig(max_iters=500), n_classes=2)
        predicted = softmax_matrix(model, data.X).argmax(axis=1)
        np.testing.assert_array_equal(predicted, y)

    def test_all_reference_class(self, rng):
        data = FeatureDataset(X=rng.normal(size=(40, 3)), y=np.zeros(40), feature_names=NAMES[:3])
        model = fit_logistic(data, TrainConfig(max_iters=500))
        assert np.all(softmax_matrix(model, data.X)[:, 0] > 0.99)

    def test_loss_does_not_increase(self, rng):
        data = _data(rng, m=200)
        initial, _ = nll_and_gradient(LogisticModel(theta=np.zeros((N_BINS - 1, 6))), data)
        model = fit_logistic(data, TrainConfig(max_iters=50))
        final, _ = nll_and_gradient(model, data)
        assert final <= initial

    def test_large_l1_keeps_weights_near_zero(self, rng):
        data = _data(rng, m=200)
        model = fit_logistic(data, TrainConfig(max_iters=100, l1_lambda=1e3))
        assert np.max(np.abs(model.theta[:, :-1])) < 1e-2
        assert model.l1_lambda == 1e3

    def test_zero_iterations_rejected(self):
        with pytest.raises(ValidationError):
            TrainConfig(max_iters=0)

    def test_empty_data(self):
        data = FeatureDataset(X=np.zeros((0, 2)), y=np.zeros(0), feature_names=("a", "b"))
        with pytest.raises(TrainingError):
            fit_logistic(data)


class TestLogisticPredict:
    def test_zero_theta_is_uniform_cdf(self):
        model = LogisticModel(theta=np.zeros((N_BINS - 1, 3)))
        probs = logistic_predict(model, np.zeros(2)).as_array()
        np.testing.assert_allclose(probs, (np.arange(N_BINS) + 1) / 70, atol=1e-12)
        assert probs[-1] == 1.0

    def test_certain_class_is_step(self):
        theta = np.zeros((N_BINS - 1, 2))
        theta[2, -1] = 60.0  # class 3
        probs = logistic_predict(LogisticModel(theta=theta), np.zeros(1)).as_array()
        np.testing.assert_allclose(probs[:3], 0.0, atol=1e-12)
        np.testing.assert_allclose(probs[3:], 1.0, atol=1e-12)

    def test_valid_cdf_for_random_models(self, rng):
        for _ in range(20):
            model = LogisticModel(theta=rng.normal(0.0, 2.0, (N_BINS - 1, 4)))
            probs = logistic_predict(model, rng.normal(size=3)).as_array()
            assert np.all(np.diff(probs) >= 0)
            assert probs[-1] == 1.0

    def test_needs_full_bin_model(self):
        with pytest.raises(ShapeError):
            logistic_predict(LogisticModel(theta=np.zeros((1, 2))), np.zeros(1))

    def test_predictor_on_synthetic(self, feature_split):
        train, test = feature_split
        predictor = LogisticPredictor(TrainConfig(max_iters=100)).fit(train)
        P = predictor.predict_matrix(test)
        assert P.shape == (len(test), N_BINS)
        assert np.all(np.diff(P, axis=1) >= 0)
        np.testing.assert_array_equal(P[:, -1], 1.0)


@pytest.mark.slow
class TestAgainstHistogram:
    def test_beats_histogram_on_synthetic(self):
        data = derive_dataset(generate_synthetic(SyntheticConfig(rows=20_000), seed=0))
        train, test = split(data, 10_000, 10_000, seed=1)
        logistic = LogisticPredictor().fit(train).predict_matrix(test)
        hist = HistogramPredictor().fit(train).predict_matrix(test)
        assert score(logistic, test.labels).score < score(hist, test.labels).score
