"""
Simple benchmarks: `No Rain`, `Sigmoid` and `Histogram`.
"""

from __future__ import annotations
import logging

import numpy as np

from raincdf.errors import TrainingError
from raincdf.models.schemas import (
    BINS, COVERAGE_FEATURE, N_BINS,
    CdfPrediction, FeatureDataset, FeatureVector, HistogramModel, PredictorName, mean_feature,
)
from raincdf.predictors.base import Predictor, feature_column, feature_value

logger = logging.getLogger(__name__)

RR1_FEATURE = mean_feature("RR1")
# One scan minute, as a fraction of the hour
MIN_COVERAGE = 1.0 / 60.0
# Sigmoid output is clamped into the open unit interval; entries may tie at either bound
SIGMOID_FLOOR = float(np.finfo(np.float64).tiny)
SIGMOID_CEIL = 1.0 - float(np.finfo(np.float64).epsneg)


# ------------------------------------------------
# Empirical CDFs
# ------------------------------------------------

def label_bins(labels: np.ndarray) -> np.ndarray:
    """
    Smallest bin j with y <= j, or N_BINS when y > 69.

    For integer j, y <= j exactly when ceil(y) <= j.
    """
    return np.minimum(np.ceil(labels), N_BINS).astype(np.int64)


def empirical_cdf_rows(labels: np.ndarray) -> np.ndarray:
    """
    Row-wise empirical CDFs: out[r, j] = #(labels[r] <= j) / labels.shape[1].
    """
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    n, k = labels.shape
    width = N_BINS + 1
    flat = (np.arange(n, dtype=np.int64)[:, np.newaxis] * width + label_bins(labels)).ravel()
    counts = np.bincount(flat, minlength=n * width).reshape(n, width)
    return np.cumsum(counts[:, :N_BINS], axis=1) / k


def empirical_cdf(labels: np.ndarray) -> np.ndarray:
    return empirical_cdf_rows(np.asarray(labels, dtype=np.float64)[np.newaxis, :])[0]


# ------------------------------------------------
# No Rain
# ------------------------------------------------

def no_rain_predict() -> CdfPrediction:
    return CdfPrediction(probs=(1.0,) * N_BINS)


class NoRainPredictor(Predictor):
    name = PredictorName.NORAIN

    def predict_matrix(self, data: FeatureDataset) -> np.ndarray:
        return np.ones((len(data), N_BINS), dtype=np.float64)


# ------------------------------------------------
# Sigmoid
# ------------------------------------------------

def sigmoid_cdf_matrix(
    rr1_mean: np.ndarray,
    coverage: np.ndarray,
    normalize_full_hour: bool = False,
) -> np.ndarray:
    hours = 1.0 if normalize_full_hour else np.maximum(coverage, MIN_COVERAGE)
    estimate = np.asarray(rr1_mean / hours, dtype=np.float64).reshape(-1)
    z = BINS[np.newaxis, :] - estimate[:, np.newaxis]
    # 1 / (1 + exp(-z)) without overflow
    return np.clip(np.exp(-np.logaddexp(0.0, -z)), SIGMOID_FLOOR, SIGMOID_CEIL)


def sigmoid_predict(record: FeatureVector, normalize_full_hour: bool = False) -> CdfPrediction:
    rr1 = feature_value(record, RR1_FEATURE)
    coverage = feature_value(record, COVERAGE_FEATURE)
    probs = sigmoid_cdf_matrix(np.array([rr1]), np.array([coverage]), normalize_full_hour)
    return CdfPrediction.from_array(probs[0])


class SigmoidPredictor(Predictor):
    name = PredictorName.SIGMOID

    def __init__(self, normalize_full_hour: bool = False):
        self.normalize_full_hour = normalize_full_hour

    def predict_matrix(self, data: FeatureDataset) -> np.ndarray:
        return sigmoid_cdf_matrix(
            feature_column(data, RR1_FEATURE),
            feature_column(data, COVERAGE_FEATURE),
            self.normalize_full_hour,
        )


# ------------------------------------------------
# Histogram
# ------------------------------------------------

def train_histogram(labels: np.ndarray) -> HistogramModel:
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        raise TrainingError("histogram needs at least one training label")
    model = HistogramModel(
        cdf=CdfPrediction.from_array(empirical_cdf(labels)),
        n_train=int(labels.size),
    )
    logger.info(f"[Histogram] Trained on {labels.size} labels, P(y <= 0) = {model.cdf.probs[0]:.4f}")
    return model


class HistogramPredictor(Predictor):
    name = PredictorName.HISTOGRAM

    def __init__(self):
        self.model: HistogramModel | None = None

    def fit(self, data: FeatureDataset) -> "HistogramPredictor":
        self.model = train_histogram(data.labels)
        return self

    def predict_matrix(self, data: FeatureDataset) -> np.ndarray:
        if self.model is None:
            raise TrainingError("histogram predictor used before fit()")
        return np.tile(self.model.cdf.as_array(), (len(data), 1))
