"""
Multinomial logistic regression over the 70 rain bins.

Class 0 is the reference class with implicit zero parameters; every other
class c has logit theta[c-1] . [x, 1]. Parameters are fitted by maximum
likelihood with batch gradient descent and a backtracking line search,
optionally with an L1 penalty on the non-bias weights.
"""

from __future__ import annotations
import logging

import numpy as np

from raincdf.errors import DivergenceError, ShapeError, TrainingError
from raincdf.models.schemas import (
    N_BINS,
    CdfPrediction, FeatureDataset, FeatureVector, LogisticModel, PredictorName, TrainConfig,
)
from raincdf.predictors.base import Predictor

logger = logging.getLogger(__name__)

# Sufficient-decrease constant of the line search
ARMIJO_C = 1e-4
# Line search gives up once the step shrinks below this fraction of the base rate
MIN_STEP_RATIO = 1e-12
MAX_STEP_RATIO = 1e6


def label_classes(labels: np.ndarray, n_classes: int = N_BINS) -> np.ndarray:
    """class(y) = min(ceil(y), n_classes - 1)."""
    return np.minimum(np.ceil(np.asarray(labels, dtype=np.float64)), n_classes - 1).astype(np.int64)


def augment(X: np.ndarray) -> np.ndarray:
    """Append the constant bias input."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return np.column_stack([X, np.ones(X.shape[0])])


def _full_logits(theta: np.ndarray, Xa: np.ndarray) -> np.ndarray:
    Z = Xa @ theta.T
    return np.column_stack([np.zeros(Xa.shape[0]), Z])


def _log_softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))


def _check_features(model: LogisticModel, X: np.ndarray) -> None:
    if X.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} features, got {X.shape[1]}")


def softmax_matrix(model: LogisticModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_features(model, X)
    return np.exp(_log_softmax(_full_logits(model.theta, augment(X))))


def softmax_prob(model: LogisticModel, x: FeatureVector | np.ndarray) -> np.ndarray:
    """Class probabilities for one feature vector (max-subtracted for overflow safety)."""
    if isinstance(x, FeatureVector):
        x = x.as_array()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a single feature vector, got shape {x.shape}")
    return softmax_matrix(model, x[np.newaxis, :])[0]


def _penalty_mask(theta: np.ndarray) -> np.ndarray:
    mask = np.ones_like(theta)
    mask[:, -1] = 0.0  # bias column is not penalized
    return mask


def _objective(
    theta: np.ndarray,
    Xa: np.ndarray,
    classes: np.ndarray,
    l1_lambda: float,
) -> tuple[float, np.ndarray]:
    m = Xa.shape[0]
    log_p = _log_softmax(_full_logits(theta, Xa))
    loss = -float(np.mean(log_p[np.arange(m), classes]))

    residual = np.exp(log_p)
    residual[np.arange(m), classes] -= 1.0
    grad = residual[:, 1:].T @ Xa / m

    if l1_lambda > 0:
        mask = _penalty_mask(theta)
        loss += l1_lambda * float(np.sum(np.abs(theta) * mask))
        # Subgradient at 0 taken as 0
        grad = grad + l1_lambda * np.sign(theta) * mask
    return loss, grad


def nll_and_gradient(
    model: LogisticModel,
    data: FeatureDataset,
    l1_lambda: float | None = None,
) -> tuple[float, np.ndarray]:
    """
    Mean negative log-likelihood (plus L1 penalty) and its (sub)gradient
    with respect to theta.
    """
    if len(data) == 0:
        raise TrainingError("cannot evaluate the likelihood of an empty dataset")
    _check_features(model, data.X)
    lam = model.l1_lambda if l1_lambda is None else l1_lambda
    classes = label_classes(data.labels, model.n_classes)
    return _objective(model.theta, augment(data.X), classes, lam)


def fit_logistic(
    data: FeatureDataset,
    config: TrainConfig = TrainConfig(),
    n_classes: int = N_BINS,
) -> LogisticModel:
    """
    Gradient descent from zero parameters.

    Each iteration tries the current step, halving it until the loss shows
    sufficient decrease; accepted steps double for the next iteration. The
    loss therefore never increases. Stops at max_iters, when the gradient
    norm drops below tolerance, or when no step decreases the loss.
    """
    if len(data) == 0:
        raise TrainingError("cannot fit logistic regression on an empty dataset")
    Xa = augment(data.X)
    classes = label_classes(data.labels, n_classes)
    lam = config.l1_lambda

    theta = np.zeros((n_classes - 1, Xa.shape[1]))
    loss, grad = _objective(theta, Xa, classes, lam)
    if not np.isfinite(loss):
        raise DivergenceError(0, loss)
    initial_loss = loss
    base = config.learning_rate
    step = base

    iteration = 0
    for iteration in range(1, config.max_iters + 1):
        grad_sq = float(np.sum(grad * grad))
        if np.sqrt(grad_sq) < config.tolerance:
            logger.info(f"[Logistic] Converged at iteration {iteration}: |grad| < {config.tolerance}")
            break

        while True:
            candidate = theta - step * grad
            cand_loss, cand_grad = _objective(candidate, Xa, classes, lam)
            if not np.isfinite(cand_loss):
                raise DivergenceError(iteration, cand_loss)
            if cand_loss <= loss - ARMIJO_C * step * grad_sq:
                break
            step *= 0.5
            if step < MIN_STEP_RATIO * base:
                break

        if step < MIN_STEP_RATIO * base:
            logger.info(f"[Logistic] Line search stalled at iteration {iteration}, loss {loss:.6f}")
            break

        theta, loss, grad = candidate, cand_loss, cand_grad
        step = min(step * 2.0, MAX_STEP_RATIO * base)
        if iteration % 50 == 0:
            logger.info(f"[Logistic] Iteration {iteration}: loss {loss:.6f}")

    logger.info(
        f"[Logistic] Fitted {theta.shape[0]}x{theta.shape[1]} parameters on {len(data)} rows "
        f"after {iteration} iteration(s): loss {initial_loss:.6f} -> {loss:.6f}"
    )
    return LogisticModel(theta=theta, l1_lambda=lam, feature_names=data.feature_names)


def cdf_from_class_probs(probs: np.ndarray) -> np.ndarray:
    """Cumulative class probabilities, clipped to 1 with the last bin exactly 1."""
    cdf = np.minimum(np.cumsum(probs, axis=1), 1.0)
    cdf[:, -1] = 1.0
    return cdf


def logistic_predict(model: LogisticModel, x: FeatureVector | np.ndarray) -> CdfPrediction:
    if model.n_classes != N_BINS:
        raise ShapeError(f"CDF prediction needs a {N_BINS}-class model, got {model.n_classes}")
    probs = softmax_prob(model, x)
    return CdfPrediction.from_array(cdf_from_class_probs(probs[np.newaxis, :])[0])


class LogisticPredictor(Predictor):
    name = PredictorName.LOGISTIC

    def __init__(self, config: TrainConfig = TrainConfig()):
        self.config = config
        self.model: LogisticModel | None = None

    def fit(self, data: FeatureDataset) -> "LogisticPredictor":
        self.model = fit_logistic(data, self.config)
        return self

    def predict_matrix(self, data: FeatureDataset) -> np.ndarray:
        if self.model is None:
            raise TrainingError("logistic predictor used before fit()")
        return cdf_from_class_probs(softmax_matrix(self.model, data.X))
