"""
Common surface shared by every predictor so the benchmark can treat them alike.
"""

from __future__ import annotations
from abc import ABC, abstractmethod
from typing import ClassVar

import numpy as np

from raincdf.errors import SchemaError
from raincdf.models.schemas import (
    CdfPrediction, FeatureDataset, FeatureVector, MissingDataPolicy, PredictorName,
)


def feature_column(data: FeatureDataset, name: str) -> np.ndarray:
    if name not in data.feature_names:
        raise SchemaError(f"feature {name!r} is not in the derived schema {list(data.feature_names)}")
    return data.column(name)


def feature_value(record: FeatureVector, name: str) -> float:
    if name not in record.feature_names:
        raise SchemaError(f"feature {name!r} is not in the record's schema {list(record.feature_names)}")
    return record[name]


class Predictor(ABC):
    """
    A trained predictor maps feature rows to CDF rows.

    `policy` is the missing-data policy the predictor's features must be
    derived with; fit() returns self so calls can be chained.
    """

    name: ClassVar[PredictorName]
    policy: ClassVar[MissingDataPolicy] = MissingDataPolicy()

    def fit(self, data: FeatureDataset) -> "Predictor":
        return self

    @abstractmethod
    def predict_matrix(self, data: FeatureDataset) -> np.ndarray:
        """(m, 70) matrix of CDF rows, one per feature row."""

    def predict(self, record: FeatureVector) -> CdfPrediction:
        single = FeatureDataset(
            X=record.as_array()[np.newaxis, :], feature_names=record.feature_names,
        )
        return CdfPrediction.from_array(self.predict_matrix(single)[0])
