"""
Radar dataset ingestion.

Responsibilities:
  1. Parse the comma-separated radar format (space-separated series per cell)
  2. Write datasets back out in the same format
  3. Derive fixed-width feature vectors under the missing-data policy
  4. Generate synthetic zero-inflated rainfall datasets
  5. Split datasets reproducibly into train / validation subsets
"""

from __future__ import annotations
import logging
import math
from pathlib import Path
from typing import Sequence, TypeVar

import numpy as np
import pandas as pd
from pydantic import ValidationError

from raincdf.errors import ParseError, SchemaError, SizeError, StructuralError
from raincdf.models.schemas import (
    BINS, COVERAGE_FEATURE, ID_COLUMN, LABEL_COLUMN, N_BINS, RAIN_RATE_COLUMNS,
    REQUIRED_COLUMNS, TIME_TO_END,
    FeatureDataset, FeatureVector, MissingDataPolicy, RawDataset, RawRecord,
    SyntheticConfig, TimeSeriesCell, mean_feature,
)

logger = logging.getLogger(__name__)

# One scan minute: the resolution floor of TimeToEnd
MINUTES_PER_HOUR = 60.0

_EMPTY = TimeSeriesCell()


# ------------------------------------------------
# Parsing
# ------------------------------------------------

def _parse_token(token: str, row: int, column: str) -> float:
    """Parse one series token; `nan` (any case) maps to float('nan')."""
    if token.lower() == "nan":
        return math.nan
    try:
        value = float(token)
    except ValueError:
        raise ParseError(row, column, token) from None
    if not math.isfinite(value):
        raise ParseError(row, column, token)
    return value


def _tokens(cell: str) -> list[str]:
    return cell.split()


def _parse_row(
    row: int,
    raw_cells: dict[str, str],
    feature_names: Sequence[str],
) -> dict[str, TimeSeriesCell]:
    time_tokens = _tokens(raw_cells[TIME_TO_END])
    times = [_parse_token(t, row, TIME_TO_END) for t in time_tokens]

    cells: dict[str, TimeSeriesCell] = {}
    for name in feature_names:
        tokens = time_tokens if name == TIME_TO_END else _tokens(raw_cells[name])
        if not tokens:
            cells[name] = _EMPTY
            continue
        if len(tokens) != len(times):
            raise StructuralError(
                row,
                f"series {name} has {len(tokens)} values but {TIME_TO_END} has {len(times)}",
            )
        values = times if name == TIME_TO_END else [_parse_token(t, row, name) for t in tokens]
        # nan drops the value together with its paired time entry
        pairs = [
            (v, t) for v, t in zip(values, times)
            if not (math.isnan(v) or math.isnan(t))
        ]
        try:
            cells[name] = TimeSeriesCell(
                values=tuple(v for v, _ in pairs),
                times=tuple(t for _, t in pairs),
            )
        except ValidationError as e:
            raise StructuralError(row, f"series {name}: {e.errors()[0]['msg']}") from e
    return cells


def _parse_label(row: int, token: str) -> float:
    token = token.strip()
    try:
        label = float(token)
    except ValueError:
        raise ParseError(row, LABEL_COLUMN, token) from None
    if not math.isfinite(label):
        raise ParseError(row, LABEL_COLUMN, token)
    if label < 0:
        raise StructuralError(row, f"negative label {label}")
    return label


def parse_dataset(path: str | Path, has_labels: bool = True) -> RawDataset:
    """
    Parse a radar dataset file.

    Ids are assigned 0..m-1 in file order; an `Id` column, if present,
    is not interpreted.
    """
    path = Path(path)
    frame = pd.read_csv(
        path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8",
    )
    columns = [str(c) for c in frame.columns]
    required = list(REQUIRED_COLUMNS) + ([LABEL_COLUMN] if has_labels else [])
    missing = [c for c in required if c not in columns]
    if missing:
        raise SchemaError(f"{path}: missing required columns {missing}")

    feature_names = tuple(c for c in columns if c not in (ID_COLUMN, LABEL_COLUMN))
    records = []
    for row, raw_cells in enumerate(frame.to_dict(orient="records")):
        cells = _parse_row(row, raw_cells, feature_names)
        label = _parse_label(row, raw_cells[LABEL_COLUMN]) if has_labels else None
        records.append(RawRecord(id=row, cells=cells, label=label))

    logger.info(f"[Ingest] Parsed {len(records)} rows ({len(feature_names)} series) from {path}")
    return RawDataset(records=tuple(records), feature_names=feature_names)


def _format_cell(cell: TimeSeriesCell, schedule: TimeSeriesCell, name: str) -> str:
    if cell.is_empty:
        return ""
    if name == TIME_TO_END:
        return " ".join(repr(t) for t in cell.times)
    # Re-align with the scan schedule, restoring dropped entries as nan
    by_time = dict(zip(cell.times, cell.values))
    return " ".join(repr(by_time[t]) if t in by_time else "nan" for t in schedule.times)


def serialize_dataset(dataset: RawDataset, path: str | Path) -> None:
    """Write a raw dataset in the same format parse_dataset reads."""
    path = Path(path)
    rows = []
    for record in dataset.records:
        schedule = record.cells.get(TIME_TO_END, _EMPTY)
        out: dict[str, object] = {ID_COLUMN: record.id}
        for name in dataset.feature_names:
            out[name] = _format_cell(record.cells.get(name, _EMPTY), schedule, name)
        if record.label is not None:
            out[LABEL_COLUMN] = repr(record.label)
        rows.append(out)

    columns = [ID_COLUMN, *dataset.feature_names]
    if dataset.has_labels and len(dataset) > 0:
        columns.append(LABEL_COLUMN)
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    logger.info(f"[Ingest] Wrote {len(dataset)} rows to {path}")


# ------------------------------------------------
# Feature derivation
# ------------------------------------------------

def derived_feature_names(
    feature_names: Sequence[str],
    policy: MissingDataPolicy,
) -> tuple[str, ...]:
    names = []
    for name in feature_names:
        if name in policy.drop:
            continue
        names.append(COVERAGE_FEATURE if name == TIME_TO_END else mean_feature(name))
    return tuple(names)


def _derive_values(
    cells: dict[str, TimeSeriesCell],
    feature_names: Sequence[str],
    policy: MissingDataPolicy,
) -> list[float]:
    values = []
    for name in feature_names:
        if name in policy.drop:
            continue
        cell = cells.get(name, _EMPTY)
        if name == TIME_TO_END:
            # Coverage fraction of the hour; an empty schedule covers nothing
            if cell.is_empty:
                values.append(0.0)
            else:
                values.append((max(cell.times) - min(cell.times)) / MINUTES_PER_HOUR)
        elif cell.is_empty:
            values.append(policy.fill_value)
        else:
            values.append(float(np.mean(cell.values)))
    return values


def derive_features(
    record: RawRecord,
    policy: MissingDataPolicy = MissingDataPolicy(),
) -> FeatureVector:
    names = tuple(record.cells)
    return FeatureVector(
        values=tuple(_derive_values(record.cells, names, policy)),
        feature_names=derived_feature_names(names, policy),
        label=record.label,
    )


def derive_dataset(
    dataset: RawDataset,
    policy: MissingDataPolicy = MissingDataPolicy(),
) -> FeatureDataset:
    """Derive the feature matrix for every record of a dataset."""
    names = derived_feature_names(dataset.feature_names, policy)
    X = np.empty((len(dataset), len(names)), dtype=np.float64)
    for i, record in enumerate(dataset.records):
        X[i] = _derive_values(record.cells, dataset.feature_names, policy)
    y = None
    if len(dataset) > 0 and dataset.has_labels:
        y = np.array([r.label for r in dataset.records], dtype=np.float64)
    logger.debug(f"[Ingest] Derived {X.shape[0]}x{X.shape[1]} features (drop={policy.drop})")
    return FeatureDataset(X=X, y=y, feature_names=names)


def write_feature_file(dataset: FeatureDataset, path: str | Path) -> None:
    frame = pd.DataFrame(dataset.X, columns=list(dataset.feature_names))
    if dataset.y is not None:
        frame[LABEL_COLUMN] = dataset.y
    frame.to_csv(path, index=False)
    logger.info(f"[Ingest] Wrote {len(dataset)} feature rows to {path}")


def read_feature_file(path: str | Path) -> FeatureDataset:
    frame = pd.read_csv(path, float_precision="round_trip")
    y = None
    if LABEL_COLUMN in frame.columns:
        y = frame.pop(LABEL_COLUMN).to_numpy(dtype=np.float64)
    return FeatureDataset(
        X=frame.to_numpy(dtype=np.float64),
        y=y,
        feature_names=tuple(str(c) for c in frame.columns),
    )


def read_labels(path: str | Path) -> np.ndarray:
    """Read the label column of any dataset, feature or label file."""
    frame = pd.read_csv(path, usecols=lambda c: c == LABEL_COLUMN, float_precision="round_trip")
    if LABEL_COLUMN not in frame.columns:
        raise SchemaError(f"{path}: no {LABEL_COLUMN} column")
    return frame[LABEL_COLUMN].to_numpy(dtype=np.float64)


# ------------------------------------------------
# Synthetic data
# ------------------------------------------------

# Lower bound of injected gauge-error labels (world-record hourly rainfall)
_OUTLIER_RANGE = (305.0, 1000.0)


def synthetic_feature_names(config: SyntheticConfig) -> tuple[str, ...]:
    channels = tuple(f"Channel{i + 1}" for i in range(config.channels))
    return (TIME_TO_END, "Reflectivity", *channels, *RAIN_RATE_COLUMNS)


def _series(values: np.ndarray, times: np.ndarray) -> TimeSeriesCell:
    return TimeSeriesCell(values=tuple(values.tolist()), times=tuple(times.tolist()))


def generate_synthetic(config: SyntheticConfig, seed: int) -> RawDataset:
    """
    Generate a labeled dataset with a zero-inflated label marginal.

    Rain-rate series are noisy multiples of the hourly label; RR1 carries the
    least noise, RR2/RR3 are frequently missing.
    """
    config.check()
    rng = np.random.default_rng(seed)
    m = config.rows
    is_dry = rng.random(m) < config.p0
    wet = np.minimum(rng.exponential(config.label_mean, m), float(N_BINS - 1))
    labels = np.where(is_dry, 0.0, wet)
    is_outlier = rng.random(m) < config.outlier_rate
    labels = np.where(is_outlier, rng.uniform(*_OUTLIER_RANGE, m), labels)

    names = synthetic_feature_names(config)
    noise = dict(zip(RAIN_RATE_COLUMNS, (config.rr1_noise, config.rr2_noise, config.rr3_noise)))
    minutes = np.arange(int(MINUTES_PER_HOUR) + 1, dtype=np.float64)

    records = []
    for i in range(m):
        label = float(labels[i])
        n = int(rng.integers(1, config.max_scans + 1))
        times = np.sort(rng.choice(minutes, size=n, replace=False))[::-1]

        cells: dict[str, TimeSeriesCell] = {TIME_TO_END: _series(times, times)}

        if rng.random() < config.missing_rate:
            cells["Reflectivity"] = _EMPTY
        else:
            base = 15.0 + 8.0 * math.log1p(label) if label > 0 else 3.0
            refl = np.maximum(base + rng.normal(0.0, 4.0, n), 0.0)
            cells["Reflectivity"] = _series(np.round(refl, 1), times)

        for name in names[2:2 + config.channels]:
            if rng.random() < config.missing_rate:
                cells[name] = _EMPTY
            else:
                cells[name] = _series(np.round(0.2 * label + rng.normal(0.0, 1.0, n), 3), times)

        for name in RAIN_RATE_COLUMNS:
            sigma = noise[name]
            if name != "RR1" and rng.random() < config.rr23_missing_rate:
                cells[name] = _EMPTY
                continue
            gain = 1.0 + sigma * rng.normal(0.0, 1.0, n)
            rate = label * gain + 0.5 * sigma * rng.normal(0.0, 1.0, n)
            cells[name] = _series(np.round(rate, 3), times)

        records.append(RawRecord(id=i, cells=cells, label=label))

    logger.info(
        f"[Ingest] Generated {m} synthetic rows (seed={seed}, "
        f"zero fraction={float(np.mean(labels == 0.0)):.4f})"
    )
    return RawDataset(records=tuple(records), feature_names=names)


def label_marginal_cdf(config: SyntheticConfig) -> np.ndarray:
    """Analytic P(y <= j) of the generator's label distribution."""
    config.check()
    wet = 1.0 - np.exp(-BINS / config.label_mean)
    wet[-1] = 1.0  # positive labels are clamped at 69 mm
    cdf = config.p0 + (1.0 - config.p0) * wet
    return np.minimum(cdf * (1.0 - config.outlier_rate), 1.0)


# ------------------------------------------------
# Splitting
# ------------------------------------------------

D = TypeVar("D", RawDataset, FeatureDataset)


def split_indices(m: int, n_train: int, n_val: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n_train < 0 or n_val < 0:
        raise SizeError(f"split sizes must be non-negative (got {n_train}, {n_val})")
    if n_train + n_val > m:
        raise SizeError(f"requested {n_train} + {n_val} rows but only {m} are available")
    perm = np.random.default_rng(seed).permutation(m)
    return perm[:n_train], perm[n_train:n_train + n_val]


def take(data: D, indices: np.ndarray) -> D:
    if isinstance(data, FeatureDataset):
        return data.take(indices)
    return RawDataset(
        records=tuple(data.records[i] for i in indices),
        feature_names=data.feature_names,
    )


def split(data: D, n_train: int, n_val: int, seed: int) -> tuple[D, D]:
    """Disjoint uniform-random train / validation subsets."""
    train_idx, val_idx = split_indices(len(data), n_train, n_val, seed)
    logger.info(f"[Ingest] Split {len(data)} rows into {n_train} train / {n_val} validation")
    return take(data, train_idx), take(data, val_idx)
