"""
k-nearest-neighbor CDF predictor: the empirical CDF of the k nearest
training labels, a local version of the Histogram predictor.
"""

from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from raincdf.errors import ShapeError, TrainingError
from raincdf.models.schemas import CdfPrediction, FeatureDataset, PredictorName
from raincdf.predictors.base import Predictor
from raincdf.predictors.baselines import empirical_cdf, empirical_cdf_rows
from raincdf.services.kdtree import DEFAULT_LEAF_SIZE, KdTree, build_kdtree, query_knn

logger = logging.getLogger(__name__)

DEFAULT_K = 150
DEFAULT_P = 2.0
DEFAULT_CHUNK_ROWS = 2000


def knn_predict(tree: KdTree, x: np.ndarray, k: int, p: float = DEFAULT_P) -> CdfPrediction:
    neighbors = query_knn(tree, x, k, p)
    return CdfPrediction.from_array(empirical_cdf(tree.labels[neighbors.indices]))


def chunk_bounds(m: int, chunk_rows: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk_rows, m)) for lo in range(0, m, max(1, chunk_rows))]


class Standardizer:
    """Per-column centering and scaling fitted on training features."""

    def __init__(self, mean: np.ndarray, scale: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        return cls(X.mean(axis=0), scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


class KnnPredictor(Predictor):
    name = PredictorName.KNN

    def __init__(
        self,
        k: int = DEFAULT_K,
        p: float = DEFAULT_P,
        leaf_size: int = DEFAULT_LEAF_SIZE,
        standardize: bool = False,
        threads: int = 1,
        chunk_rows: int = DEFAULT_CHUNK_ROWS,
    ):
        self.k = k
        self.p = p
        self.leaf_size = leaf_size
        self.standardize = standardize
        self.threads = threads
        self.chunk_rows = chunk_rows
        self.tree: KdTree | None = None
        self.standardizer: Standardizer | None = None
        self.feature_names: tuple[str, ...] = ()

    def fit(self, data: FeatureDataset) -> "KnnPredictor":
        X = data.X
        if self.standardize:
            self.standardizer = Standardizer.fit(X)
            X = self.standardizer.transform(X)
        self.tree = build_kdtree(X, data.labels, self.leaf_size)
        self.feature_names = data.feature_names
        return self

    def _features(self, data: FeatureDataset) -> np.ndarray:
        if self.feature_names and data.feature_names != self.feature_names:
            raise ShapeError(
                f"features {list(data.feature_names)} do not match the tree's "
                f"{list(self.feature_names)}"
            )
        X = data.X
        return self.standardizer.transform(X) if self.standardizer is not None else X

    def neighbor_labels(self, data: FeatureDataset, k: int | None = None) -> np.ndarray:
        """(m, k) labels of each row's neighbors, nearest first."""
        if self.tree is None:
            raise TrainingError("knn predictor used before fit()")
        k = self.k if k is None else k
        X = self._features(data)
        tree = self.tree

        def _chunk(bounds: tuple[int, int]) -> np.ndarray:
            indices, _ = tree.query_many(X[bounds[0]:bounds[1]], k, self.p)
            return tree.labels[indices]

        with ThreadPoolExecutor(max_workers=max(1, self.threads)) as pool:
            parts = list(pool.map(_chunk, chunk_bounds(X.shape[0], self.chunk_rows)))
        if not parts:
            return np.empty((0, k), dtype=np.float64)
        return np.concatenate(parts)

    def predict_matrix(self, data: FeatureDataset) -> np.ndarray:
        labels = self.neighbor_labels(data)
        logger.debug(f"[KNN] Predicted {labels.shape[0]} rows with k={self.k}, p={self.p}")
        return empirical_cdf_rows(labels)
