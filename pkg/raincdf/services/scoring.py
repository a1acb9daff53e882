"""
Bin-wise squared-loss scoring of CDF predictions.

A prediction row holds P(y <= j) for the 70 bins j = 0..69. A row is scored
against the Heaviside step of its label, H(j - y), and the result is averaged
over rows and bins.
"""

from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd

from raincdf.errors import CdfValidationError, DataError, SchemaError, ShapeError
from raincdf.models.schemas import BINS, N_BINS, CdfPrediction, ScoreReport

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = [f"p{j}" for j in range(N_BINS)]

Predictions = Union[np.ndarray, Sequence[CdfPrediction]]


def heaviside(x: float) -> int:
    """1 for x >= 0, else 0."""
    return 1 if x >= 0 else 0


def truth_matrix(labels: np.ndarray) -> np.ndarray:
    """H(j - y_i) for every row i and bin j."""
    labels = np.asarray(labels, dtype=np.float64)
    return (BINS[np.newaxis, :] >= labels[:, np.newaxis]).astype(np.float64)


def step_cdf_matrix(estimates: np.ndarray) -> np.ndarray:
    """Step CDFs for a vector of point estimates: 0 below the estimate, 1 at and above."""
    return truth_matrix(estimates)


def step_cdf(estimate: float) -> CdfPrediction:
    return CdfPrediction.from_array(step_cdf_matrix(np.array([estimate]))[0])


def as_matrix(predictions: Predictions) -> np.ndarray:
    if isinstance(predictions, np.ndarray):
        P = np.asarray(predictions, dtype=np.float64)
    else:
        P = np.array([p.probs for p in predictions], dtype=np.float64).reshape(-1, N_BINS)
    if P.ndim != 2 or P.shape[1] != N_BINS:
        raise ShapeError(f"prediction matrix must have {N_BINS} columns, got shape {P.shape}")
    return P


def validate_predictions(P: np.ndarray) -> None:
    """Reject rows that leave [0, 1] or decrease."""
    bad_range = ~np.all((P >= 0.0) & (P <= 1.0), axis=1)
    bad_order = np.any(np.diff(P, axis=1) < 0.0, axis=1)
    bad = np.flatnonzero(bad_range | bad_order)
    if bad.size:
        row = int(bad[0])
        reason = "probability outside [0, 1]" if bad_range[row] else "CDF is not non-decreasing"
        raise CdfValidationError(row, f"{reason} ({bad.size} invalid rows in total)")


def bin_loss_sums(P: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-bin sums of squared loss; dividing by the row count gives per_bin_loss."""
    return np.sum((P - truth_matrix(labels)) ** 2, axis=0)


def score(
    predictions: Predictions,
    labels: Sequence[float] | np.ndarray,
    chunk_rows: int | None = None,
    threads: int = 1,
    validate: bool = True,
) -> ScoreReport:
    """
    Mean squared bin loss of a prediction matrix against labels.

    Rows may be scored in chunks, concurrently when threads > 1; partial
    sums are combined in chunk order. validate=False skips the CDF checks
    so deliberately malformed probe submissions can still be scored.
    """
    P = as_matrix(predictions)
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != P.shape[0]:
        raise ShapeError(f"{P.shape[0]} predictions but {y.size} labels")
    if y.shape[0] == 0:
        raise ShapeError("cannot score an empty prediction set")
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise DataError("labels must be finite and non-negative")
    if validate:
        validate_predictions(P)

    m = P.shape[0]
    step = chunk_rows or m
    bounds = [(lo, min(lo + step, m)) for lo in range(0, m, step)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        partials = list(pool.map(lambda b: bin_loss_sums(P[b[0]:b[1]], y[b[0]:b[1]]), bounds))
    per_bin = np.sum(partials, axis=0) / m

    report = ScoreReport(
        score=float(np.mean(per_bin)),
        rows=m,
        per_bin_loss=per_bin.tolist(),
    )
    logger.debug(f"[Score] {m} rows, {len(bounds)} chunk(s): {report.score:.8f}")
    return report


# ------------------------------------------------
# Prediction files
# ------------------------------------------------

def write_predictions(predictions: Predictions, path: str | Path) -> None:
    P = as_matrix(predictions)
    pd.DataFrame(P, columns=PREDICTION_COLUMNS).to_csv(path, index=False)
    logger.info(f"[Score] Wrote {P.shape[0]} prediction rows to {path}")


def read_predictions(path: str | Path) -> np.ndarray:
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in PREDICTION_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: prediction file lacks columns {missing[:3]}...")
    return frame[PREDICTION_COLUMNS].to_numpy(dtype=np.float64)
