"""
Pydantic models used across the system.
"""

from __future__ import annotations
import math
from enum import Enum
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from raincdf.errors import ConfigError, DataError

# Bins j = 0..69 of the submission CDF
N_BINS = 70
BINS = np.arange(N_BINS, dtype=np.float64)

# Column names the ingestion layer depends on
TIME_TO_END = "TimeToEnd"
RAIN_RATE_COLUMNS = ("RR1", "RR2", "RR3")
REQUIRED_COLUMNS = (TIME_TO_END, *RAIN_RATE_COLUMNS)
ID_COLUMN = "Id"
LABEL_COLUMN = "Expected"

COVERAGE_FEATURE = f"{TIME_TO_END}_coverage"


def mean_feature(name: str) -> str:
    return f"{name}_mean"


# ------------------------------------------
# Raw radar records
# ------------------------------------------

class TimeSeriesCell(BaseModel):
    """One radar series: values paired with minutes-to-end-of-hour."""

    model_config = ConfigDict(frozen=True)

    values: tuple[float, ...] = ()
    times: tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check_series(self) -> "TimeSeriesCell":
        if len(self.values) != len(self.times):
            raise ValueError(
                f"values/times length mismatch ({len(self.values)} vs {len(self.times)})"
            )
        for t in self.times:
            if not 0.0 <= t <= 60.0:
                raise ValueError(f"time {t} outside [0, 60]")
        for a, b in zip(self.times, self.times[1:]):
            if not b < a:
                raise ValueError("times must be strictly decreasing")
        return self

    @property
    def is_empty(self) -> bool:
        return len(self.values) == 0


class RawRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int
    cells: dict[str, TimeSeriesCell]
    label: Optional[float] = Field(None, ge=0.0)


class RawDataset(BaseModel):
    model_config = ConfigDict(frozen=True)

    records: tuple[RawRecord, ...]
    # Feature columns in header order (Id and Expected excluded)
    feature_names: tuple[str, ...]

    @property
    def has_labels(self) -> bool:
        return all(r.label is not None for r in self.records)

    def __len__(self) -> int:
        return len(self.records)


# ------------------------------------------
# Derived features
# ------------------------------------------

class MissingDataPolicy(BaseModel):
    """Columns to discard and the constant that fills fully missing cells."""

    model_config = ConfigDict(frozen=True)

    drop: tuple[str, ...] = ("RR2", "RR3")
    fill_value: float = 0.0

    @classmethod
    def keep_all(cls) -> "MissingDataPolicy":
        return cls(drop=())


class FeatureVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    values: tuple[float, ...]
    feature_names: tuple[str, ...]
    label: Optional[float] = None

    @model_validator(mode="after")
    def _check_vector(self) -> "FeatureVector":
        if len(self.values) != len(self.feature_names):
            raise ValueError("feature vector length does not match its schema")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("feature vector contains a non-finite entry")
        return self

    def __getitem__(self, name: str) -> float:
        return self.values[self.feature_names.index(name)]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


class FeatureDataset(BaseModel):
    """Row-major feature matrix with optional labels."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    X: np.ndarray
    y: Optional[np.ndarray] = None
    feature_names: tuple[str, ...]

    @model_validator(mode="after")
    def _check_dataset(self) -> "FeatureDataset":
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"feature matrix shape {self.X.shape} does not match schema of "
                f"{len(self.feature_names)} columns"
            )
        if not np.all(np.isfinite(self.X)):
            raise ValueError("feature matrix contains non-finite entries")
        if self.y is not None and self.y.shape != (self.X.shape[0],):
            raise ValueError("label vector does not match feature row count")
        return self

    @property
    def labels(self) -> np.ndarray:
        if self.y is None:
            raise DataError("dataset is unlabeled")
        return self.y

    def __len__(self) -> int:
        return self.X.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    def row(self, i: int) -> FeatureVector:
        label = None if self.y is None else float(self.y[i])
        return FeatureVector(
            values=tuple(self.X[i].tolist()), feature_names=self.feature_names, label=label,
        )

    def take(self, indices: np.ndarray) -> "FeatureDataset":
        y = None if self.y is None else self.y[indices]
        return FeatureDataset(X=self.X[indices], y=y, feature_names=self.feature_names)


# ------------------------------------------
# Predictions and scores
# ------------------------------------------

class CdfPrediction(BaseModel):
    """probs[j] = P(y <= j) for j = 0..69."""

    model_config = ConfigDict(frozen=True)

    probs: tuple[float, ...]

    @field_validator("probs")
    @classmethod
    def _check_cdf(cls, probs: tuple[float, ...]) -> tuple[float, ...]:
        if len(probs) != N_BINS:
            raise ValueError(f"expected {N_BINS} probabilities, got {len(probs)}")
        for j, v in enumerate(probs):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"probability {v} at bin {j} outside [0, 1]")
        for j in range(1, N_BINS):
            if probs[j] < probs[j - 1]:
                raise ValueError(f"CDF decreases at bin {j}")
        return probs

    @classmethod
    def from_array(cls, probs: np.ndarray) -> "CdfPrediction":
        return cls(probs=tuple(float(v) for v in probs))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)


class ScoreReport(BaseModel):
    score: float = Field(ge=0.0)
    rows: int
    per_bin_loss: list[float]


# ------------------------------------------
# Synthetic data
# ------------------------------------------

class SyntheticConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    rows: int
    p0: float = 0.8764
    label_mean: float = Field(2.5, gt=0.0)
    rr1_noise: float = Field(0.3, ge=0.0)
    rr2_noise: float = Field(1.0, ge=0.0)
    rr3_noise: float = Field(2.0, ge=0.0)
    max_scans: int = Field(12, ge=1, le=61)
    missing_rate: float = Field(0.05, ge=0.0, le=1.0)
    rr23_missing_rate: float = Field(0.5, ge=0.0, le=1.0)
    outlier_rate: float = Field(0.0, ge=0.0, le=1.0)
    channels: int = Field(2, ge=0)

    def check(self) -> "SyntheticConfig":
        if self.rows < 1:
            raise ConfigError("synthetic config needs at least one row")
        if not 0.0 <= self.p0 <= 1.0:
            raise ConfigError(f"p0={self.p0} outside [0, 1]")
        return self


# ------------------------------------------
# Fitted models
# ------------------------------------------

class HistogramModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    cdf: CdfPrediction
    n_train: int = Field(ge=1)


class VotingWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    w: tuple[float, ...]
    n_used: int = Field(ge=0)
    residual_norm: float
    with_bias: bool = False

    @model_validator(mode="after")
    def _check_weights(self) -> "VotingWeights":
        expected = len(RAIN_RATE_COLUMNS) + (1 if self.with_bias else 0)
        if len(self.w) != expected:
            raise ValueError(f"expected {expected} weights, got {len(self.w)}")
        if not all(math.isfinite(v) for v in (*self.w, self.residual_norm)):
            raise ValueError("voting weights must be finite")
        return self


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_iters: int = Field(500, ge=1)
    learning_rate: float = Field(1.0, gt=0.0)
    tolerance: float = Field(1e-6, gt=0.0)
    l1_lambda: float = Field(0.0, ge=0.0)


class LogisticModel(BaseModel):
    """
    theta has one row per non-reference class and one column per feature,
    plus a trailing bias column. The reference class (0) has implicit zero
    parameters.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    theta: np.ndarray
    reference_class: Literal[0] = 0
    l1_lambda: float = Field(0.0, ge=0.0)
    feature_names: tuple[str, ...] = ()

    @model_validator(mode="after")
    def _check_theta(self) -> "LogisticModel":
        if self.theta.ndim != 2 or self.theta.shape[0] < 1 or self.theta.shape[1] < 1:
            raise ValueError(f"theta must be a non-empty matrix, got shape {self.theta.shape}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta contains non-finite parameters")
        if self.feature_names and len(self.feature_names) != self.theta.shape[1] - 1:
            raise ValueError("theta column count does not match the feature schema")
        return self

    @property
    def n_classes(self) -> int:
        return self.theta.shape[0] + 1

    @property
    def n_features(self) -> int:
        return self.theta.shape[1] - 1


class Neighbors(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    indices: np.ndarray
    distances: np.ndarray

    @model_validator(mode="after")
    def _check_neighbors(self) -> "Neighbors":
        if self.indices.shape != self.distances.shape:
            raise ValueError("indices and distances must be parallel")
        if np.any(np.diff(self.distances) < 0):
            raise ValueError("distances must be sorted ascending")
        if len(np.unique(self.indices)) != len(self.indices):
            raise ValueError("neighbor indices must be distinct")
        return self


# ------------------------------------------
# Experiments
# ------------------------------------------

class PredictorName(str, Enum):
    NORAIN = "norain"
    SIGMOID = "sigmoid"
    HISTOGRAM = "histogram"
    SIMPLEAVG = "simpleavg"
    VOTING = "voting"
    LOGISTIC = "logistic"
    KNN = "knn"


class SweepResult(BaseModel):
    parameter: str
    parameter_values: list[int]
    scores: list[float]
    reference_score: Optional[float] = None
    config: dict[str, Any] = {}

    @model_validator(mode="after")
    def _check_sweep(self) -> "SweepResult":
        if not self.parameter_values or len(self.parameter_values) != len(self.scores):
            raise ValueError("sweep values and scores must be parallel and non-empty")
        if any(s < 0 for s in self.scores):
            raise ValueError("scores must be non-negative")
        return self

    @property
    def best(self) -> int:
        return self.parameter_values[int(np.argmin(self.scores))]


class PredictorOptions(BaseModel):
    """Hyperparameters handed to every predictor the harness builds."""

    model_config = ConfigDict(frozen=True)

    k: int = Field(150, ge=1)
    p: float = Field(2.0, ge=1.0)
    leaf_size: int = Field(16, ge=1)
    standardize: bool = False
    outlier_mm: float = Field(305.0, gt=0.0)
    with_bias: bool = False
    normalize_full_hour: bool = False
    train: TrainConfig = TrainConfig()
    threads: int = Field(1, ge=1)
    chunk_rows: int = Field(2000, ge=1)


class BenchmarkRow(BaseModel):
    predictor: PredictorName
    score: float = Field(ge=0.0)
    rows_evaluated: int


class BenchmarkTable(BaseModel):
    rows: list[BenchmarkRow]
    reference_score: Optional[float] = None
    config: dict[str, Any] = {}

    def score_of(self, name: PredictorName | str) -> float:
        name = PredictorName(name)
        for row in self.rows:
            if row.predictor == name:
                return row.score
        raise KeyError(name.value)
