"""
k-d tree over feature vectors with exact k-nearest-neighbor queries.

The tree is stored as flat node arrays so it can be written to and read
from the binary tree file unchanged:

  split_dim[n]    splitting coordinate, LEAF for leaf buckets
  split_value[n]  lower-median coordinate of the node's points
  left[n], right[n]  child node ids (-1 for leaves)
  start[n], end[n]   the node's slice of `perm`, the permuted point indices

Neighbors are ordered by (distance, training index), so results are unique
even under ties.
"""

from __future__ import annotations
import logging
import math

import numpy as np

from raincdf.errors import BuildError, ConfigError, DataError, ShapeError, SizeError
from raincdf.models.schemas import Neighbors

logger = logging.getLogger(__name__)

LEAF = -1
DEFAULT_LEAF_SIZE = 16
# query_many scans every point once k exceeds m / SCAN_RATIO
SCAN_RATIO = 8


def minkowski_distance(points: np.ndarray, x: np.ndarray, p: float) -> np.ndarray:
    """l_p distance from x to every row of points (p = inf is the max norm)."""
    diff = np.abs(points - x)
    if p == 1:
        return diff.sum(axis=1)
    if p == 2:
        return np.sqrt((diff * diff).sum(axis=1))
    if math.isinf(p):
        return diff.max(axis=1)
    return (diff ** p).sum(axis=1) ** (1.0 / p)


def _check_query(m: int, d: int, x: np.ndarray, k: int, p: float) -> None:
    if x.shape != (d,):
        raise ShapeError(f"query has shape {x.shape}, expected ({d},)")
    if not np.all(np.isfinite(x)):
        raise DataError("query vector contains non-finite coordinates")
    if k < 1:
        raise SizeError(f"k must be at least 1 (got {k})")
    if k > m:
        raise SizeError(f"k={k} exceeds the {m} indexed points")
    if not p >= 1:
        raise ConfigError(f"l_p distance needs p >= 1 (got {p})")


def _select(distances: np.ndarray, indices: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((indices, distances))[:k]
    return distances[order], indices[order]


def brute_force_knn(points: np.ndarray, x: np.ndarray, k: int, p: float = 2.0) -> Neighbors:
    """Full scan, sorted by (distance, index)."""
    points = np.asarray(points, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_query(points.shape[0], points.shape[1], x, k, p)
    dist, idx = _select(
        minkowski_distance(points, x, p), np.arange(points.shape[0], dtype=np.int64), k,
    )
    return Neighbors(indices=idx, distances=dist)


class KdTree:
    """Immutable k-d tree; queries are read-only and safe to run concurrently."""

    def __init__(
        self,
        points: np.ndarray,
        labels: np.ndarray,
        perm: np.ndarray,
        split_dim: np.ndarray,
        split_value: np.ndarray,
        left: np.ndarray,
        right: np.ndarray,
        start: np.ndarray,
        end: np.ndarray,
        leaf_size: int,
    ):
        self.points = points
        self.labels = labels
        self.perm = perm
        self.split_dim = split_dim
        self.split_value = split_value
        self.left = left
        self.right = right
        self.start = start
        self.end = end
        self.leaf_size = leaf_size
        for arr in (points, labels, perm, split_dim, split_value, left, right, start, end):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.split_dim.shape[0]

    def leaves(self) -> list[int]:
        return [int(n) for n in np.flatnonzero(self.split_dim == LEAF)]

    def traverse(self) -> np.ndarray:
        """Point indices in leaf order, visiting every leaf once from the root."""
        visited = []
        stack = [0]
        while stack:
            node = stack.pop()
            if self.split_dim[node] == LEAF:
                visited.append(self.perm[self.start[node]:self.end[node]])
            else:
                stack.append(int(self.right[node]))
                stack.append(int(self.left[node]))
        return np.concatenate(visited)

    # --------------------------------------------------
    # Queries
    # --------------------------------------------------

    def _search(self, x: np.ndarray, k: int, p: float) -> tuple[np.ndarray, np.ndarray]:
        best_d = np.empty(0, dtype=np.float64)
        best_i = np.empty(0, dtype=np.int64)
        pending_d: list[np.ndarray] = []
        pending_i: list[np.ndarray] = []
        n_pending = 0
        worst = math.inf
        # Re-select once this many candidates are waiting
        flush_at = max(k // 4, 1)

        stack = [(0, 0.0)]
        while stack:
            node, bound = stack.pop()
            # Strict: a region at exactly `worst` may still hold a lower index
            if bound > worst:
                continue
            dim = self.split_dim[node]
            if dim == LEAF:
                ids = self.perm[self.start[node]:self.end[node]]
                dist = minkowski_distance(self.points[ids], x, p)
                keep = dist <= worst
                if keep.any():
                    pending_d.append(dist[keep])
                    pending_i.append(ids[keep])
                    n_pending += int(keep.sum())
                filling = best_d.size < k and best_d.size + n_pending >= k
                if filling or n_pending >= flush_at and best_d.size == k:
                    best_d, best_i = _select(
                        np.concatenate([best_d, *pending_d]),
                        np.concatenate([best_i, *pending_i]),
                        k,
                    )
                    pending_d, pending_i, n_pending = [], [], 0
                    worst = float(best_d[-1])
                continue

            diff = x[dim] - self.split_value[node]
            if diff <= 0:
                near, far = self.left[node], self.right[node]
            else:
                near, far = self.right[node], self.left[node]
            stack.append((int(far), max(bound, abs(float(diff)))))
            stack.append((int(near), bound))

        return _select(
            np.concatenate([best_d, *pending_d]),
            np.concatenate([best_i, *pending_i]),
            k,
        )

    def _scan(self, x: np.ndarray, k: int, p: float) -> tuple[np.ndarray, np.ndarray]:
        dist = minkowski_distance(self.points, x, p)
        if k < dist.size:
            # Every one of the k nearest lies at or below the k-th smallest distance
            kth = np.partition(dist, k - 1)[k - 1]
            ids = np.flatnonzero(dist <= kth)
        else:
            ids = np.arange(dist.size)
        return _select(dist[ids], ids.astype(np.int64), k)

    def query(self, x: np.ndarray, k: int, p: float = 2.0) -> Neighbors:
        x = np.asarray(x, dtype=np.float64)
        _check_query(self.m, self.d, x, k, p)
        dist, idx = self._search(x, k, p)
        return Neighbors(indices=idx, distances=dist)

    def query_many(self, X: np.ndarray, k: int, p: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
        """
        Batch query; returns (indices, distances), each of shape (n, k).

        Results equal query() row by row; large k switches to a full scan.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ShapeError(f"query matrix must be 2-D, got shape {X.shape}")
        if not 1 <= k <= self.m:
            raise SizeError(f"k={k} is outside [1, {self.m}]")
        indices = np.empty((X.shape[0], k), dtype=np.int64)
        distances = np.empty((X.shape[0], k), dtype=np.float64)
        search = self._scan if k * SCAN_RATIO >= self.m else self._search
        for r in range(X.shape[0]):
            _check_query(self.m, self.d, X[r], k, p)
            distances[r], indices[r] = search(X[r], k, p)
        return indices, distances


def query_knn(tree: KdTree, x: np.ndarray, k: int, p: float = 2.0) -> Neighbors:
    return tree.query(x, k, p)


def build_kdtree(
    points: np.ndarray,
    labels: np.ndarray,
    leaf_size: int = DEFAULT_LEAF_SIZE,
) -> KdTree:
    """
    Build a balanced tree: the split coordinate cycles with depth and the
    split value is the lower median of the node's points. Ties in a
    coordinate are ordered by point index, so construction is deterministic.
    """
    points = np.array(points, dtype=np.float64)
    labels = np.array(labels, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0 or points.shape[1] == 0:
        raise BuildError(f"cannot build a tree over points of shape {points.shape}")
    if labels.shape != (points.shape[0],):
        raise BuildError(f"{labels.shape[0]} labels for {points.shape[0]} points")
    if leaf_size < 1:
        raise ConfigError(f"leaf size must be at least 1 (got {leaf_size})")
    bad = np.flatnonzero(~np.all(np.isfinite(points), axis=1))
    if bad.size:
        raise DataError(f"row {int(bad[0])}: non-finite coordinate")

    m, d = points.shape
    perm = np.arange(m, dtype=np.int64)
    split_dim: list[int] = []
    split_value: list[float] = []
    left: list[int] = []
    right: list[int] = []
    start: list[int] = []
    end: list[int] = []

    # Explicit stack of (node, lo, hi, depth); children are allocated on split
    def _new_node(lo: int, hi: int) -> int:
        split_dim.append(LEAF)
        split_value.append(0.0)
        left.append(-1)
        right.append(-1)
        start.append(lo)
        end.append(hi)
        return len(split_dim) - 1

    stack = [(_new_node(0, m), 0, m, 0)]
    while stack:
        node, lo, hi, depth = stack.pop()
        n = hi - lo
        if n <= leaf_size:
            continue
        dim = depth % d
        idx = perm[lo:hi]
        perm[lo:hi] = idx[np.lexsort((idx, points[idx, dim]))]
        mid = lo + (n - 1) // 2
        split_dim[node] = dim
        split_value[node] = float(points[perm[mid], dim])
        left[node] = _new_node(lo, mid + 1)
        right[node] = _new_node(mid + 1, hi)
        stack.append((right[node], mid + 1, hi, depth + 1))
        stack.append((left[node], lo, mid + 1, depth + 1))

    tree = KdTree(
        points=points,
        labels=labels,
        perm=perm,
        split_dim=np.array(split_dim, dtype=np.int32),
        split_value=np.array(split_value, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        start=np.array(start, dtype=np.int64),
        end=np.array(end, dtype=np.int64),
        leaf_size=leaf_size,
    )
    logger.info(f"[KdTree] Built tree over {m}x{d} points: {tree.n_nodes} nodes, leaf size {leaf_size}")
    return tree
