import json

import numpy as np
import pandas as pd
import pytest

from raincdf.main import main
from raincdf.models.schemas import N_BINS
from raincdf.services.scoring import PREDICTION_COLUMNS


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def datasets(tmp_path):
    """A generated train/test pair of raw radar files."""
    (tmp_path / "train.cfg").write_text("rows = 600\n", encoding="utf-8")
    (tmp_path / "test.cfg").write_text("rows = 250\n", encoding="utf-8")
    train, test = tmp_path / "train.csv", tmp_path / "test.csv"
    code = _run(
        "generate", "--config", tmp_path / "train.cfg", "--out", train,
        "--test-config", tmp_path / "test.cfg", "--test-out", test, "--seed", 3,
    )
    assert code == 0
    return train, test


def _score(capsys, pred, labels):
    capsys.readouterr()
    assert _run("score", "--pred", pred, "--labels", labels) == 0
    return json.loads(capsys.readouterr().out)["score"]


class TestPipeline:
    def test_generate_derive_train_predict_score(self, datasets, tmp_path, capsys):
        train, test = datasets
        features = tmp_path / "train_features.csv"
        assert _run("derive", "--in", train, "--out", features) == 0
        frame = pd.read_csv(features)
        assert "RR1_mean" in frame.columns and "Expected" in frame.columns
        assert len(frame) == 600

        tree = tmp_path / "tree.bin"
        assert _run("train", "--model", "knn", "--train", features, "--out", tree, "--k", 20) == 0
        pred = tmp_path / "pred.csv"
        assert _run("predict", "--model", "knn", "--tree", tree, "--test", test, "--out", pred, "--k", 20) == 0
        P = pd.read_csv(pred)
        assert list(P.columns) == PREDICTION_COLUMNS
        assert P.shape == (250, N_BINS)

        value = _score(capsys, pred, test)
        assert 0.0 <= value < 1.0

    def test_saved_tree_matches_fitting_in_place(self, datasets, tmp_path):
        train, test = datasets
        tree = tmp_path / "tree.bin"
        _run("train", "--model", "knn", "--train", train, "--out", tree, "--k", 15)
        from_tree, refit = tmp_path / "a.csv", tmp_path / "b.csv"
        _run("predict", "--model", "knn", "--tree", tree, "--test", test, "--out", from_tree, "--k", 15)
        _run("predict", "--model", "knn", "--train", train, "--test", test, "--out", refit, "--k", 15)
        assert from_tree.read_bytes() == refit.read_bytes()

    @pytest.mark.parametrize("model", ["voting", "logistic"])
    def test_model_files(self, datasets, tmp_path, capsys, model):
        train, test = datasets
        model_file = tmp_path / f"{model}.json"
        assert _run("train", "--model", model, "--train", train, "--out", model_file, "--iters", 30) == 0
        pred = tmp_path / "pred.csv"
        code = _run("predict", "--model", model, "--model-file", model_file, "--test", test, "--out", pred)
        assert code == 0
        assert _score(capsys, pred, test) >= 0.0

    @pytest.mark.parametrize("model", ["norain", "sigmoid", "simpleavg"])
    def test_untrained_predictors(self, datasets, tmp_path, model):
        _, test = datasets
        assert _run("predict", "--model", model, "--test", test, "--out", tmp_path / "pred.csv") == 0

    def test_score_report_file(self, datasets, tmp_path):
        train, test = datasets
        pred = tmp_path / "pred.csv"
        _run("predict", "--model", "histogram", "--train", train, "--test", test, "--out", pred)
        report = tmp_path / "report.json"
        assert _run("score", "--pred", pred, "--labels", test, "--report", report) == 0
        payload = json.loads(report.read_text(encoding="utf-8"))
        assert payload["rows"] == 250
        assert len(payload["per_bin_loss"]) == N_BINS


class TestDeterminism:
    def test_generate_is_byte_identical(self, tmp_path):
        config = tmp_path / "cfg"
        config.write_text("rows = 200\nmissing_rate = 0.2\n", encoding="utf-8")
        _run("generate", "--config", config, "--out", tmp_path / "a.csv", "--seed", 9)
        _run("generate", "--config", config, "--out", tmp_path / "b.csv", "--seed", 9)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_sweep_is_byte_identical(self, datasets, tmp_path):
        train, _ = datasets
        for name in ("a", "b"):
            code = _run(
                "sweep-k", "--data", train, "--n-train", 400, "--n-val", 200,
                "--k-values", "1,10,50", "--out-csv", tmp_path / f"{name}.csv",
                "--out-json", tmp_path / f"{name}.json", "--seed", 4, "--threads", 2,
            )
            assert code == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert pd.read_csv(tmp_path / "a.csv")["k"].tolist() == [1, 10, 50]

    @pytest.mark.parametrize("command", [
        "derive", "train-voting", "train-logistic", "train-knn", "predict", "score",
        "sweep-size", "benchmark", "infer-histogram",
    ])
    def test_rerun_is_byte_identical(self, datasets, tmp_path, command):
        train, test = datasets

        def argv(out):
            return {
                "derive": ["derive", "--in", train, "--out", out / "features.csv", "--keep-rr23"],
                "train-voting": ["train", "--model", "voting", "--train", train, "--out", out / "model.json"],
                "train-logistic": [
                    "train", "--model", "logistic", "--train", train, "--out", out / "model.json", "--iters", 20,
                ],
                "train-knn": ["train", "--model", "knn", "--train", train, "--out", out / "tree.bin", "--k", 20],
                "predict": [
                    "predict", "--model", "knn", "--train", train, "--test", test,
                    "--out", out / "pred.csv", "--k", 20,
                ],
                "score": ["score", "--pred", tmp_path / "pred.csv", "--labels", test, "--report", out / "report.json"],
                "sweep-size": [
                    "sweep-size", "--data", train, "--n-train", 400, "--n-val", 200, "--sizes", "50,100,400",
                    "--k", 10, "--seed", 6, "--out-csv", out / "size.csv", "--out-json", out / "size.json",
                ],
                "benchmark": [
                    "benchmark", "--train", train, "--test", test, "--predictors", "norain,sigmoid,histogram,knn",
                    "--k", 20, "--pred-dir", out / "preds", "--out-csv", out / "bench.csv",
                    "--out-json", out / "bench.json",
                ],
                "infer-histogram": ["infer-histogram", "--labels", test, "--out", out / "hist.csv"],
            }[command]

        _run("predict", "--model", "histogram", "--train", train, "--test", test, "--out", tmp_path / "pred.csv")
        runs = []
        for name in ("a", "b"):
            out = tmp_path / name
            out.mkdir()
            assert _run(*argv(out)) == 0
            runs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
        assert runs[0]
        assert runs[0] == runs[1]


class TestBenchmarkCommand:
    def test_pred_dir_scores_match_table(self, datasets, tmp_path, capsys):
        train, test = datasets
        out_csv, pred_dir = tmp_path / "bench.csv", tmp_path / "preds"
        code = _run(
            "benchmark", "--train", train, "--test", test, "--predictors", "norain,histogram,knn",
            "--k", 20, "--pred-dir", pred_dir, "--out-csv", out_csv,
        )
        assert code == 0
        table = pd.read_csv(out_csv, float_precision="round_trip")
        for name, value in zip(table["predictor"], table["score"]):
            assert _score(capsys, pred_dir / f"{name}.csv", test) == pytest.approx(value, abs=1e-15)

    def test_sweep_size_command(self, datasets, tmp_path):
        train, _ = datasets
        out = tmp_path / "size.csv"
        code = _run(
            "sweep-size", "--data", train, "--n-train", 400, "--n-val", 200,
            "--sizes", "50,100,400", "--k", 10, "--out-csv", out,
        )
        assert code == 0
        assert pd.read_csv(out)["n_train"].tolist() == [50, 100, 400]


class TestInferHistogram:
    def test_from_labels(self, datasets, tmp_path):
        _, test = datasets
        out = tmp_path / "hist.csv"
        assert _run("infer-histogram", "--labels", test, "--out", out) == 0
        frame = pd.read_csv(out)
        assert len(frame) == N_BINS
        assert np.all(np.diff(frame["proportion"]) >= -1e-12)

    def test_from_score_pair(self, capsys):
        assert _run("infer-histogram", "--all-ones-score", 0.02, "--zeroed-score", 0.02) == 0
        assert float(capsys.readouterr().out) == pytest.approx(0.5)


class TestExitCodes:
    def test_unknown_benchmark_predictor(self, datasets):
        train, test = datasets
        assert _run("benchmark", "--train", train, "--test", test, "--predictors", "histogram,persistence") == 2

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / "cfg"
        config.write_text("rows = 10\nhail = 3\n", encoding="utf-8")
        assert _run("generate", "--config", config, "--out", tmp_path / "x.csv") == 2

    def test_invalid_hyperparameter(self, datasets, tmp_path):
        train, _ = datasets
        assert _run("train", "--model", "knn", "--train", train, "--out", tmp_path / "t.bin", "--k", 0) == 2

    def test_malformed_prediction_file(self, datasets, tmp_path):
        _, test = datasets
        P = np.ones((250, N_BINS))
        P[7, 3] = 1.2
        pred = tmp_path / "pred.csv"
        pd.DataFrame(P, columns=PREDICTION_COLUMNS).to_csv(pred, index=False)
        assert _run("score", "--pred", pred, "--labels", test) == 3

    def test_prediction_file_without_columns(self, datasets, tmp_path):
        _, test = datasets
        pred = tmp_path / "pred.csv"
        pred.write_text("a,b\n1,2\n", encoding="utf-8")
        assert _run("score", "--pred", pred, "--labels", test) == 3

    def test_missing_input(self, tmp_path):
        assert _run("derive", "--in", tmp_path / "nope.csv", "--out", tmp_path / "out.csv") == 3

    def test_unknown_model_choice(self, datasets, tmp_path):
        _, test = datasets
        with pytest.raises(SystemExit) as err:
            _run("predict", "--model", "persistence", "--test", test, "--out", tmp_path / "p.csv")
        assert err.value.code == 2
