"""
Persistence for fitted models.

Voting weights and logistic models are JSON files. k-d trees use a
versioned little-endian binary format:

  magic     8 bytes  b"RAINKD01"
  header    <QQQI    m, d, n_nodes, leaf_size
  arrays             points <f8[m*d], labels <f8[m], perm <i8[m],
                     split_dim <i4[n], split_value <f8[n], left <i4[n],
                     right <i4[n], start <i8[n], end <i8[n]
  metadata  <I + utf-8 JSON   feature names and standardization parameters
"""

from __future__ import annotations
import json
import logging
import struct
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from raincdf.errors import ModelFormatError
from raincdf.models.schemas import LogisticModel, VotingWeights
from raincdf.predictors.knn import KnnPredictor, Standardizer
from raincdf.services.kdtree import LEAF, KdTree

logger = logging.getLogger(__name__)

TREE_MAGIC = b"RAINKD"
TREE_VERSION = b"01"
_HEADER = struct.Struct("<QQQI")
_META_LEN = struct.Struct("<I")

# (attribute, dtype, length key) in file order
_TREE_ARRAYS = (
    ("points", "<f8", "md"),
    ("labels", "<f8", "m"),
    ("perm", "<i8", "m"),
    ("split_dim", "<i4", "n"),
    ("split_value", "<f8", "n"),
    ("left", "<i4", "n"),
    ("right", "<i4", "n"),
    ("start", "<i8", "n"),
    ("end", "<i8", "n"),
)


def _read_json(path: Path, kind: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"cannot read {kind} model {path}: {e}") from e


def _write_json(data: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


# --------------------------------------------------
# Voting weights
# --------------------------------------------------

def save_voting(weights: VotingWeights, path: str | Path) -> None:
    _write_json(weights.model_dump(), Path(path))
    logger.info(f"[ModelStore] Saved voting weights to {path}")


def load_voting(path: str | Path) -> VotingWeights:
    data = _read_json(Path(path), "voting")
    try:
        return VotingWeights(**data)
    except ValidationError as e:
        raise ModelFormatError(f"invalid voting model {path}: {e}") from e


# --------------------------------------------------
# Logistic models
# --------------------------------------------------

def save_logistic(model: LogisticModel, path: str | Path) -> None:
    rows, cols = model.theta.shape
    _write_json(
        {
            "rows": rows,
            "cols": cols,
            "theta": model.theta.ravel(order="C").tolist(),
            "reference_class": model.reference_class,
            "l1_lambda": model.l1_lambda,
            "feature_names": list(model.feature_names),
        },
        Path(path),
    )
    logger.info(f"[ModelStore] Saved {rows}x{cols} logistic model to {path}")


def load_logistic(path: str | Path) -> LogisticModel:
    data = _read_json(Path(path), "logistic")
    try:
        theta = np.asarray(data["theta"], dtype=np.float64).reshape(data["rows"], data["cols"])
        return LogisticModel(
            theta=theta,
            reference_class=data.get("reference_class", 0),
            l1_lambda=data.get("l1_lambda", 0.0),
            feature_names=tuple(data.get("feature_names", ())),
        )
    except (KeyError, ValueError, ValidationError) as e:
        raise ModelFormatError(f"invalid logistic model {path}: {e}") from e


# --------------------------------------------------
# k-d trees
# --------------------------------------------------

def save_tree(predictor: KnnPredictor, path: str | Path) -> None:
    tree = predictor.tree
    if tree is None:
        raise ModelFormatError("cannot save an unfitted knn predictor")
    meta = {
        "feature_names": list(predictor.feature_names),
        "standardize": None,
    }
    if predictor.standardizer is not None:
        meta["standardize"] = {
            "mean": predictor.standardizer.mean.tolist(),
            "scale": predictor.standardizer.scale.tolist(),
        }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")

    with open(path, "wb") as f:
        f.write(TREE_MAGIC + TREE_VERSION)
        f.write(_HEADER.pack(tree.m, tree.d, tree.n_nodes, tree.leaf_size))
        for attr, dtype, _ in _TREE_ARRAYS:
            f.write(np.ascontiguousarray(getattr(tree, attr), dtype=dtype).tobytes())
        f.write(_META_LEN.pack(len(meta_bytes)))
        f.write(meta_bytes)
    logger.info(f"[ModelStore] Saved tree ({tree.m} points, {tree.n_nodes} nodes) to {path}")


def _check_tree_arrays(path: str | Path, m: int, d: int, arrays: dict[str, np.ndarray]) -> None:
    """Reject node tables that would index outside the stored arrays."""
    n = arrays["split_dim"].size
    if m < 1 or n < 1:
        raise ModelFormatError(f"{path}: tree has {m} points and {n} nodes")
    if not np.array_equal(np.sort(arrays["perm"]), np.arange(m)):
        raise ModelFormatError(f"{path}: point permutation is not a permutation of 0..{m - 1}")

    split_dim, left, right = arrays["split_dim"], arrays["left"], arrays["right"]
    start, end = arrays["start"], arrays["end"]
    nodes = np.arange(n)
    leaf = split_dim == LEAF
    if np.any(~leaf & ((split_dim < 0) | (split_dim >= d))):
        raise ModelFormatError(f"{path}: split dimension outside [0, {d})")
    if np.any(leaf & ((left != -1) | (right != -1))):
        raise ModelFormatError(f"{path}: leaf node with children")
    inner = ~leaf
    if np.any(inner & ((left <= nodes) | (left >= n) | (right <= nodes) | (right >= n))):
        raise ModelFormatError(f"{path}: child node id out of range")
    if np.any((start < 0) | (start > end) | (end > m)):
        raise ModelFormatError(f"{path}: node point range outside [0, {m}]")


def load_tree(path: str | Path, **predictor_kwargs) -> KnnPredictor:
    """Load a tree file into a ready-to-query KnnPredictor."""
    buf = Path(path).read_bytes()
    magic = buf[:8]
    if magic[:6] != TREE_MAGIC:
        raise ModelFormatError(f"{path} is not a tree file")
    if magic[6:8] != TREE_VERSION:
        raise ModelFormatError(f"{path}: unsupported tree file version {magic[6:8]!r}")

    try:
        m, d, n, leaf_size = _HEADER.unpack_from(buf, 8)
        offset = 8 + _HEADER.size
        lengths = {"md": m * d, "m": m, "n": n}
        arrays = {}
        for attr, dtype, key in _TREE_ARRAYS:
            count = lengths[key]
            arrays[attr] = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
            offset += count * np.dtype(dtype).itemsize
        (meta_len,) = _META_LEN.unpack_from(buf, offset)
        offset += _META_LEN.size
        meta = json.loads(buf[offset:offset + meta_len].decode("utf-8"))
    except (struct.error, ValueError) as e:
        raise ModelFormatError(f"{path}: truncated or corrupt tree file ({e})") from e

    arrays["points"] = arrays["points"].reshape(m, d)
    _check_tree_arrays(path, m, d, arrays)
    tree = KdTree(leaf_size=leaf_size, **arrays)

    predictor = KnnPredictor(leaf_size=leaf_size, **predictor_kwargs)
    predictor.tree = tree
    predictor.feature_names = tuple(meta.get("feature_names", ()))
    if meta.get("standardize"):
        predictor.standardize = True
        predictor.standardizer = Standardizer(
            meta["standardize"]["mean"], meta["standardize"]["scale"],
        )
    logger.info(f"[ModelStore] Loaded tree ({m} points, {n} nodes) from {path}")
    return predictor
