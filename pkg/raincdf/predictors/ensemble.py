"""
Ensembles of the three pre-existing rain-rate algorithms (RR1, RR2, RR3).

Both predictors turn a point estimate, floored at zero, into a step CDF.
Their features are derived with RR2/RR3 retained (zero-filled when missing).
"""

from __future__ import annotations
import logging

import numpy as np

from raincdf.errors import DataError, TrainingError
from raincdf.models.schemas import (
    RAIN_RATE_COLUMNS,
    CdfPrediction, FeatureDataset, FeatureVector, MissingDataPolicy, PredictorName,
    VotingWeights, mean_feature,
)
from raincdf.predictors.base import Predictor, feature_column, feature_value
from raincdf.services.linalg import solve_least_squares
from raincdf.services.scoring import step_cdf, step_cdf_matrix

logger = logging.getLogger(__name__)

RAIN_RATE_FEATURES = tuple(mean_feature(c) for c in RAIN_RATE_COLUMNS)
ENSEMBLE_POLICY = MissingDataPolicy.keep_all()

# World-record one-hour rainfall (mm); larger labels are treated as gauge errors
OUTLIER_MM = 305.0


def rain_rate_matrix(data: FeatureDataset) -> np.ndarray:
    return np.column_stack([feature_column(data, name) for name in RAIN_RATE_FEATURES])


def _rain_rates(record: FeatureVector) -> np.ndarray:
    return np.array([feature_value(record, name) for name in RAIN_RATE_FEATURES])


def _design(R: np.ndarray, with_bias: bool) -> np.ndarray:
    if with_bias:
        return np.column_stack([R, np.ones(R.shape[0])])
    return R


# ------------------------------------------------
# Simple Average
# ------------------------------------------------

def simple_average_estimates(R: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, R.sum(axis=1) / R.shape[1])


def simple_average_predict(record: FeatureVector) -> CdfPrediction:
    return step_cdf(float(simple_average_estimates(_rain_rates(record)[np.newaxis, :])[0]))


class SimpleAveragePredictor(Predictor):
    name = PredictorName.SIMPLEAVG
    policy = ENSEMBLE_POLICY

    def predict_matrix(self, data: FeatureDataset) -> np.ndarray:
        return step_cdf_matrix(simple_average_estimates(rain_rate_matrix(data)))


# ------------------------------------------------
# Optimal Voting
# ------------------------------------------------

def fit_voting_weights(
    dataset: FeatureDataset,
    outlier_threshold: float = OUTLIER_MM,
    with_bias: bool = False,
) -> VotingWeights:
    """
    Least-squares voting weights for (RR1, RR2, RR3) after dropping rows
    whose label exceeds outlier_threshold.
    """
    R = rain_rate_matrix(dataset)
    y = dataset.labels
    keep = y <= outlier_threshold
    n_used = int(keep.sum())
    n_cols = R.shape[1] + (1 if with_bias else 0)
    if n_used < n_cols:
        raise DataError(
            f"only {n_used} rows remain after removing labels above {outlier_threshold} mm; "
            f"need at least {n_cols}"
        )

    A = _design(R[keep], with_bias)
    w = solve_least_squares(A, y[keep])
    residual = float(np.linalg.norm(A @ w - y[keep]))
    weights = VotingWeights(
        w=tuple(float(v) for v in w),
        n_used=n_used,
        residual_norm=residual,
        with_bias=with_bias,
    )
    logger.info(
        f"[Voting] Fitted w={[round(v, 6) for v in weights.w]} on {n_used}/{len(y)} rows "
        f"(dropped {len(y) - n_used} above {outlier_threshold} mm), residual {residual:.4f}"
    )
    return weights


def voting_estimates(weights: VotingWeights, R: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, _design(R, weights.with_bias) @ np.asarray(weights.w))


def voting_predict(weights: VotingWeights, record: FeatureVector) -> CdfPrediction:
    estimate = voting_estimates(weights, _rain_rates(record)[np.newaxis, :])[0]
    return step_cdf(float(estimate))


class VotingPredictor(Predictor):
    name = PredictorName.VOTING
    policy = ENSEMBLE_POLICY

    def __init__(self, outlier_threshold: float = OUTLIER_MM, with_bias: bool = False):
        self.outlier_threshold = outlier_threshold
        self.with_bias = with_bias
        self.weights: VotingWeights | None = None

    def fit(self, data: FeatureDataset) -> "VotingPredictor":
        self.weights = fit_voting_weights(data, self.outlier_threshold, self.with_bias)
        return self

    def predict_matrix(self, data: FeatureDataset) -> np.ndarray:
        if self.weights is None:
            raise TrainingError("voting predictor used before fit()")
        return step_cdf_matrix(voting_estimates(self.weights, rain_rate_matrix(data)))
