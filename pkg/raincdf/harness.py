"""
Experiment harness.

Responsibilities:
  - k sweep: validation score of the knn predictor over a grid of k
  - training-size sweep over nested subsets of one seeded shuffle
  - benchmark table comparing every predictor on one train/test pair
  - test-histogram inference from pairs of probe submission scores
  - CSV / JSON result files
"""

from __future__ import annotations
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from raincdf.errors import ConfigError, DataError, InconsistencyError, SizeError
from raincdf.models.schemas import (
    N_BINS,
    BenchmarkRow, BenchmarkTable, FeatureDataset, MissingDataPolicy, PredictorName,
    PredictorOptions, RawDataset, SweepResult,
)
from raincdf.predictors import PREDICTORS, make_predictor
from raincdf.predictors.baselines import empirical_cdf_rows
from raincdf.predictors.knn import KnnPredictor, chunk_bounds
from raincdf.services.ingest import derive_dataset
from raincdf.services.scoring import bin_loss_sums, score, write_predictions

logger = logging.getLogger(__name__)

# Slack allowed on an inferred proportion before the probe pair is rejected
PROPORTION_TOL = 1e-9


def reference_score(
    reference_cdf: Optional[np.ndarray],
    labels: np.ndarray,
    chunk_rows: int | None = None,
) -> Optional[float]:
    """Score of predicting the same CDF for every row, or None without a reference."""
    if reference_cdf is None:
        return None
    P = np.tile(np.asarray(reference_cdf, dtype=np.float64), (len(labels), 1))
    return score(P, labels, chunk_rows).score


# ------------------------------------------------
# k sweep
# ------------------------------------------------

def sweep_k(
    train: FeatureDataset,
    val: FeatureDataset,
    k_values: Sequence[int],
    p: float = 2.0,
    leaf_size: int = 16,
    threads: int = 1,
    chunk_rows: int = 2000,
    reference_cdf: Optional[np.ndarray] = None,
) -> SweepResult:
    """
    Score the knn predictor on `val` for every k in k_values.

    One tree is built and every validation row is queried once with the
    largest k; neighbors come back ordered by (distance, index), so the
    first k of them are exactly the k-neighbor answer for each smaller k.
    """
    k_values = [int(k) for k in k_values]
    if not k_values:
        raise ConfigError("k sweep needs at least one k value")
    m = len(train)
    for k in k_values:
        if k < 1 or k > m:
            raise SizeError(f"k={k} is outside [1, {m}] for the training set")

    k_max = max(k_values)
    distinct = sorted(set(k_values))
    knn = KnnPredictor(k=k_max, p=p, leaf_size=leaf_size, threads=1, chunk_rows=chunk_rows).fit(train)
    y = val.labels
    n = len(val)
    logger.info(f"[Harness] k sweep over {distinct} on {m} train / {n} validation rows (p={p})")

    def _chunk(bounds: tuple[int, int]) -> dict[int, np.ndarray]:
        lo, hi = bounds
        neighbor_labels = knn.neighbor_labels(val.take(np.arange(lo, hi)), k_max)
        return {k: bin_loss_sums(empirical_cdf_rows(neighbor_labels[:, :k]), y[lo:hi]) for k in distinct}

    sums = {k: np.zeros(N_BINS) for k in distinct}
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        # map() yields in chunk order, so the accumulation order is fixed
        for partial in pool.map(_chunk, chunk_bounds(n, chunk_rows)):
            for k in distinct:
                sums[k] += partial[k]

    by_k = {k: float(np.mean(sums[k] / n)) for k in distinct}
    for k in distinct:
        logger.info(f"[Harness] k={k}: score {by_k[k]:.8f}")

    return SweepResult(
        parameter="k",
        parameter_values=k_values,
        scores=[by_k[k] for k in k_values],
        reference_score=reference_score(reference_cdf, y, chunk_rows),
        config={
            "predictor": PredictorName.KNN.value,
            "p": p,
            "leaf_size": leaf_size,
            "n_train": m,
            "n_val": n,
        },
    )


# ------------------------------------------------
# Training-size sweep
# ------------------------------------------------

def sweep_size(
    full_train: FeatureDataset,
    val: FeatureDataset,
    sizes: Sequence[int],
    k: int,
    p: float = 2.0,
    seed: int = 0,
    leaf_size: int = 16,
    threads: int = 1,
    chunk_rows: int = 2000,
    reference_cdf: Optional[np.ndarray] = None,
) -> SweepResult:
    """
    Score the knn predictor trained on growing prefixes of one seeded
    shuffle of full_train, so every smaller training set is a subset of
    the next.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ConfigError("size sweep needs at least one training size")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError(f"training sizes must be strictly ascending, got {sizes}")
    if sizes[0] < k:
        raise ConfigError(f"training size {sizes[0]} is smaller than k={k}")
    if sizes[-1] > len(full_train):
        raise SizeError(f"training size {sizes[-1]} exceeds the {len(full_train)} available rows")

    order = np.random.default_rng(seed).permutation(len(full_train))
    y = val.labels
    scores = []
    for size in sizes:
        subset = full_train.take(order[:size])
        knn = KnnPredictor(k=k, p=p, leaf_size=leaf_size, threads=threads, chunk_rows=chunk_rows)
        knn.fit(subset)
        value = score(knn.predict_matrix(val), y, chunk_rows, threads).score
        logger.info(f"[Harness] size={size}: score {value:.8f}")
        scores.append(value)

    return SweepResult(
        parameter="n_train",
        parameter_values=sizes,
        scores=scores,
        reference_score=reference_score(reference_cdf, y, chunk_rows),
        config={
            "predictor": PredictorName.KNN.value,
            "k": k,
            "p": p,
            "seed": seed,
            "leaf_size": leaf_size,
            "n_val": len(val),
        },
    )


# ------------------------------------------------
# Benchmark
# ------------------------------------------------

def _policy_key(policy: MissingDataPolicy) -> tuple:
    return tuple(policy.drop), policy.fill_value


def run_benchmark(
    train: RawDataset,
    test: RawDataset,
    predictors: Sequence[str],
    options: PredictorOptions = PredictorOptions(),
    pred_dir: str | Path | None = None,
    reference_cdf: Optional[np.ndarray] = None,
) -> BenchmarkTable:
    """
    Train every named predictor on `train`, score it on `test` and return
    the table sorted by score (best first). Features are derived once per
    missing-data policy.
    """
    names = list(dict.fromkeys(predictors))
    if not names:
        raise ConfigError("benchmark needs at least one predictor")
    unknown = [n for n in names if n not in PREDICTORS]
    if unknown:
        raise ConfigError(f"unknown predictor(s) {unknown}; choose from {sorted(PREDICTORS)}")
    if not test.has_labels:
        raise DataError("benchmark test set has no labels")
    if pred_dir is not None:
        pred_dir = Path(pred_dir)
        pred_dir.mkdir(parents=True, exist_ok=True)

    features: dict[tuple, tuple[FeatureDataset, FeatureDataset]] = {}
    rows = []
    for name in names:
        predictor = make_predictor(name, options)
        key = _policy_key(predictor.policy)
        if key not in features:
            features[key] = (derive_dataset(train, predictor.policy), derive_dataset(test, predictor.policy))
        train_f, test_f = features[key]

        P = predictor.fit(train_f).predict_matrix(test_f)
        report = score(P, test_f.labels, options.chunk_rows, options.threads)
        logger.info(f"[Harness] {name}: score {report.score:.8f} on {report.rows} rows")
        if pred_dir is not None:
            write_predictions(P, pred_dir / f"{name}.csv")
        rows.append(BenchmarkRow(predictor=PredictorName(name), score=report.score, rows_evaluated=report.rows))

    labels = next(iter(features.values()))[1].labels
    return BenchmarkTable(
        rows=sorted(rows, key=lambda r: r.score),
        reference_score=reference_score(reference_cdf, labels, options.chunk_rows),
        config={
            "n_train": len(train),
            "n_test": len(test),
            "options": options.model_dump(mode="json"),
        },
    )


# ------------------------------------------------
# Test-histogram inference
# ------------------------------------------------

def infer_bin_proportion(
    score_all_ones: float,
    score_col_j_zeroed: float,
    n_bins: int = N_BINS,
) -> float:
    """
    Fraction of labels <= j from two submission scores.

    Zeroing column j turns each row's bin-j loss from [y > j] into [y <= j],
    a per-row change of (2 [y <= j] - 1) / n_bins in the mean score.
    """
    p = (n_bins * (score_col_j_zeroed - score_all_ones) + 1.0) / 2.0
    if p < -PROPORTION_TOL or p > 1.0 + PROPORTION_TOL:
        raise InconsistencyError(
            f"scores ({score_all_ones}, {score_col_j_zeroed}) imply proportion {p}; "
            "they are not an all-ones / column-zeroed pair"
        )
    return min(max(p, 0.0), 1.0)


def probe_matrices(j: int, rows: int) -> tuple[np.ndarray, np.ndarray]:
    """The all-ones submission and the same submission with column j set to 0."""
    if not 0 <= j < N_BINS:
        raise ConfigError(f"bin {j} is outside [0, {N_BINS - 1}]")
    ones = np.ones((rows, N_BINS), dtype=np.float64)
    zeroed = ones.copy()
    zeroed[:, j] = 0.0
    return ones, zeroed


def infer_histogram(labels: np.ndarray, chunk_rows: int | None = None) -> np.ndarray:
    """Recover P(y <= j) for every bin j by probing the scorer with labels hidden."""
    labels = np.asarray(labels, dtype=np.float64)
    base = score(np.ones((labels.size, N_BINS)), labels, chunk_rows).score
    proportions = np.empty(N_BINS)
    for j in range(N_BINS):
        _, zeroed = probe_matrices(j, labels.size)
        probe = score(zeroed, labels, chunk_rows, validate=False).score
        proportions[j] = infer_bin_proportion(base, probe)
    logger.info(f"[Harness] Inferred test histogram over {labels.size} rows: P(y <= 0) = {proportions[0]:.6f}")
    return proportions


# ------------------------------------------------
# Result files
# ------------------------------------------------

def _write_json(payload: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_sweep(result: SweepResult, csv_path: str | Path | None, json_path: str | Path | None = None) -> None:
    """Plot-ready CSV (parameter, score[, reference_score]) and a JSON copy with the config."""
    if csv_path is not None:
        frame = pd.DataFrame({result.parameter: result.parameter_values, "score": result.scores})
        if result.reference_score is not None:
            frame["reference_score"] = result.reference_score
        frame.to_csv(csv_path, index=False)
    if json_path is not None:
        _write_json(result.model_dump(mode="json"), json_path)
    logger.info(f"[Harness] Wrote {result.parameter} sweep ({len(result.scores)} points, best {result.best})")


def write_benchmark(table: BenchmarkTable, csv_path: str | Path | None, json_path: str | Path | None = None) -> None:
    if csv_path is not None:
        frame = pd.DataFrame(
            {
                "predictor": [r.predictor.value for r in table.rows],
                "score": [r.score for r in table.rows],
                "rows_evaluated": [r.rows_evaluated for r in table.rows],
            }
        )
        if table.reference_score is not None:
            frame["reference_score"] = table.reference_score
        frame.to_csv(csv_path, index=False)
    if json_path is not None:
        _write_json(table.model_dump(mode="json"), json_path)
    logger.info(f"[Harness] Wrote benchmark table ({len(table.rows)} predictors)")
