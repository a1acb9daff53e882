import json

import numpy as np
import pandas as pd
import pytest

from raincdf.errors import ConfigError, DataError, InconsistencyError, SizeError
from raincdf.harness import (
    infer_bin_proportion, infer_histogram, probe_matrices, reference_score, run_benchmark,
    sweep_k, sweep_size, write_benchmark, write_sweep,
)
from raincdf.models.schemas import N_BINS, PredictorOptions, SyntheticConfig
from raincdf.predictors.baselines import HistogramPredictor, empirical_cdf
from raincdf.predictors.knn import KnnPredictor
from raincdf.services.ingest import derive_dataset, generate_synthetic, label_marginal_cdf, split
from raincdf.services.scoring import read_predictions, score


class TestSweepK:
    def test_u_shape_on_synthetic(self, feature_split):
        train, val = feature_split
        k_values = [1, 5, 15, 50, 150, 500, len(train)]
        result = sweep_k(train, val, k_values, chunk_rows=400)
        assert result.parameter == "k"
        assert result.parameter_values == k_values
        best = min(result.scores)
        assert best < result.scores[0]
        assert best < result.scores[-1]

    def test_k_equals_m_is_histogram_score(self, feature_split):
        train, val = feature_split
        small_train = train.take(np.arange(400))
        result = sweep_k(small_train, val, [len(small_train)])
        hist = HistogramPredictor().fit(small_train).predict_matrix(val)
        assert result.scores[0] == pytest.approx(score(hist, val.labels).score, rel=1e-12)

    def test_matches_independent_predictors(self, feature_split):
        train, val = feature_split
        subset = val.take(np.arange(300))
        result = sweep_k(train, subset, [3, 40], chunk_rows=128, threads=2)
        for k, value in zip(result.parameter_values, result.scores):
            P = KnnPredictor(k=k).fit(train).predict_matrix(subset)
            assert value == pytest.approx(score(P, subset.labels).score, rel=1e-12)

    def test_repeated_k_scores_identically(self, feature_split):
        train, val = feature_split
        result = sweep_k(train, val.take(np.arange(100)), [7, 20, 7])
        assert result.scores[0] == result.scores[2]

    def test_reference_score_is_reported(self, feature_split):
        train, val = feature_split
        reference = label_marginal_cdf(SyntheticConfig(rows=1))
        result = sweep_k(train, val.take(np.arange(100)), [10], reference_cdf=reference)
        assert result.reference_score == pytest.approx(reference_score(reference, val.labels[:100]))

    def test_empty_grid(self, feature_split):
        train, val = feature_split
        with pytest.raises(ConfigError):
            sweep_k(train, val, [])

    @pytest.mark.parametrize("k", [0, 10_000])
    def test_k_out_of_range(self, feature_split, k):
        train, val = feature_split
        with pytest.raises(SizeError):
            sweep_k(train, val, [5, k])

    def test_unlabeled_validation(self, feature_split):
        train, val = feature_split
        unlabeled = val.model_copy(update={"y": None})
        with pytest.raises(DataError):
            sweep_k(train, unlabeled, [5])


class TestSweepSize:
    def test_more_data_helps(self, feature_split):
        train, val = feature_split
        result = sweep_size(train, val, [100, 316, 1000, 3000], k=50, seed=2)
        assert result.parameter == "n_train"
        assert result.scores[-1] < result.scores[0]
        assert result.config["k"] == 50

    def test_deterministic(self, feature_split):
        train, val = feature_split
        subset = val.take(np.arange(200))
        a = sweep_size(train, subset, [200, 800], k=20, seed=4)
        b = sweep_size(train, subset, [200, 800], k=20, seed=4)
        assert a.scores == b.scores

    def test_single_size(self, feature_split):
        train, val = feature_split
        result = sweep_size(train, val.take(np.arange(50)), [500], k=10)
        assert len(result.scores) == 1

    def test_not_ascending(self, feature_split):
        train, val = feature_split
        with pytest.raises(ConfigError):
            sweep_size(train, val, [1000, 500], k=10)
        with pytest.raises(ConfigError):
            sweep_size(train, val, [500, 500], k=10)

    def test_smaller_than_k(self, feature_split):
        train, val = feature_split
        with pytest.raises(ConfigError):
            sweep_size(train, val, [5, 100], k=10)

    def test_larger_than_data(self, feature_split):
        train, val = feature_split
        with pytest.raises(SizeError):
            sweep_size(train, val, [100, len(train) + 1], k=10)

    def test_empty(self, feature_split):
        train, val = feature_split
        with pytest.raises(ConfigError):
            sweep_size(train, val, [], k=10)


class TestBenchmark:
    def test_ordering_on_synthetic(self, raw_split):
        train, test = raw_split
        table = run_benchmark(
            train, test, ["norain", "histogram", "knn"], PredictorOptions(k=50),
        )
        assert table.score_of("knn") < table.score_of("histogram") < table.score_of("norain")
        assert [r.score for r in table.rows] == sorted(r.score for r in table.rows)
        assert all(r.rows_evaluated == len(test) for r in table.rows)

    def test_every_predictor_runs(self, raw_split, tmp_path):
        train, test = raw_split
        names = ["norain", "sigmoid", "histogram", "simpleavg", "voting", "logistic", "knn"]
        options = PredictorOptions(k=30, train={"max_iters": 20})
        table = run_benchmark(train, test, names, options, pred_dir=tmp_path)
        assert {r.predictor.value for r in table.rows} == set(names)
        labels = derive_dataset(test).labels
        for name in names:
            P = read_predictions(tmp_path / f"{name}.csv")
            assert score(P, labels).score == pytest.approx(table.score_of(name), abs=1e-15)

    def test_single_predictor(self, raw_split):
        train, test = raw_split
        table = run_benchmark(train, test, ["histogram"])
        assert len(table.rows) == 1
        assert table.config["n_test"] == len(test)

    def test_duplicate_names_run_once(self, raw_split):
        train, test = raw_split
        table = run_benchmark(train, test, ["norain", "norain"])
        assert len(table.rows) == 1

    def test_empty(self, raw_split):
        train, test = raw_split
        with pytest.raises(ConfigError):
            run_benchmark(train, test, [])

    def test_unknown_predictor(self, raw_split):
        train, test = raw_split
        with pytest.raises(ConfigError):
            run_benchmark(train, test, ["histogram", "persistence"])


class TestHistogramInference:
    def test_equal_scores_mean_half(self):
        assert infer_bin_proportion(0.3, 0.3) == pytest.approx(0.5)

    def test_all_zero_labels(self):
        labels = np.zeros(10)
        ones, zeroed = probe_matrices(4, labels.size)
        base = score(ones, labels).score
        zeroed_score = score(zeroed, labels, validate=False).score
        assert infer_bin_proportion(base, zeroed_score) == pytest.approx(1.0, abs=1e-12)

    def test_inconsistent_pair(self):
        with pytest.raises(InconsistencyError):
            infer_bin_proportion(0.0, 0.5)

    def test_bin_out_of_range(self):
        with pytest.raises(ConfigError):
            probe_matrices(N_BINS, 3)

    def test_recovers_label_histogram(self):
        data = generate_synthetic(SyntheticConfig(rows=10_000), seed=21)
        labels = np.array([r.label for r in data.records])
        np.testing.assert_allclose(infer_histogram(labels, chunk_rows=2500), empirical_cdf(labels), atol=1e-12)


class TestResultFiles:
    def test_sweep_files(self, feature_split, tmp_path):
        train, val = feature_split
        reference = label_marginal_cdf(SyntheticConfig(rows=1))
        result = sweep_k(train, val.take(np.arange(80)), [5, 25], reference_cdf=reference)
        write_sweep(result, tmp_path / "k.csv", tmp_path / "k.json")
        frame = pd.read_csv(tmp_path / "k.csv")
        assert list(frame.columns) == ["k", "score", "reference_score"]
        assert frame["k"].tolist() == [5, 25]
        payload = json.loads((tmp_path / "k.json").read_text(encoding="utf-8"))
        assert payload["parameter"] == "k"
        assert payload["config"]["n_train"] == len(train)

    def test_sweep_files_are_deterministic(self, feature_split, tmp_path):
        train, val = feature_split
        subset = val.take(np.arange(60))
        for name in ("a", "b"):
            write_sweep(sweep_k(train, subset, [3, 9]), tmp_path / f"{name}.csv", tmp_path / f"{name}.json")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_benchmark_file(self, raw_split, tmp_path):
        train, test = raw_split
        table = run_benchmark(train, test, ["norain", "histogram"])
        write_benchmark(table, tmp_path / "bench.csv")
        frame = pd.read_csv(tmp_path / "bench.csv")
        assert frame["predictor"].tolist() == [r.predictor.value for r in table.rows]
        assert "reference_score" not in frame.columns


@pytest.mark.slow
class TestFullScale:
    """33k training rows against 100k validation rows."""

    @pytest.fixture(scope="class")
    def full_split(self):
        data = generate_synthetic(SyntheticConfig(rows=133_000), seed=0)
        train_raw, val_raw = split(data, 33_000, 100_000, seed=1)
        return train_raw, val_raw

    def test_k_sweep_has_interior_minimum(self, full_split):
        train_raw, val_raw = full_split
        result = sweep_k(
            derive_dataset(train_raw), derive_dataset(val_raw),
            [1, 5, 15, 50, 150, 500, 5000], threads=4,
        )
        best = int(np.argmin(result.scores))
        assert 0 < best < len(result.scores) - 1

    def test_size_sweep_has_diminishing_returns(self, full_split):
        train_raw, val_raw = full_split
        result = sweep_size(
            derive_dataset(train_raw), derive_dataset(val_raw),
            [333, 1000, 3333, 10_000, 33_000], k=150, seed=3, threads=4,
        )
        gains = -np.diff(result.scores)
        assert np.all(gains > 0)
        assert gains[0] > gains[-1]

    def test_benchmark_ordering(self, full_split):
        train_raw, val_raw = full_split
        table = run_benchmark(train_raw, val_raw, ["norain", "histogram", "knn"], PredictorOptions(threads=4))
        assert table.score_of("knn") < table.score_of("histogram") < table.score_of("norain")
