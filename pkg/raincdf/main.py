"""
raincdf -- command-line entry point

Subcommands:
  generate         synthetic radar datasets
  derive           raw radar CSV -> feature CSV
  train            fit voting / logistic / knn models
  predict          write a p0..p69 prediction file
  score            score a prediction file against labels
  sweep-k          knn validation score over a grid of k
  sweep-size       knn validation score over nested training sizes
  benchmark        every predictor on one train/test pair
  infer-histogram  recover test-label bin proportions from probe scores
"""

from __future__ import annotations
import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from raincdf import __version__
from raincdf.config import load_synthetic_config, settings
from raincdf.errors import ConfigError, DataError, RainCdfError
from raincdf.harness import (
    infer_bin_proportion, infer_histogram, run_benchmark, sweep_k, sweep_size,
    write_benchmark, write_sweep,
)
from raincdf.model_store import (
    load_logistic, load_tree, load_voting, save_logistic, save_tree, save_voting,
)
from raincdf.models.schemas import (
    LABEL_COLUMN, N_BINS, TIME_TO_END,
    FeatureDataset, MissingDataPolicy, PredictorOptions, RawDataset, TrainConfig,
)
from raincdf.predictors import PREDICTORS, Predictor, make_predictor
from raincdf.services.ingest import (
    derive_dataset, generate_synthetic, label_marginal_cdf, parse_dataset, read_feature_file,
    read_labels, serialize_dataset, split, write_feature_file,
)
from raincdf.services.scoring import read_predictions, score, write_predictions

logger = logging.getLogger(__name__)

TRAINABLE = ("voting", "logistic", "knn")


# ------------------------------------------------
# Helpers
# ------------------------------------------------

def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s [%(name)s] %(levelname)s: %(message)s",
        stream=sys.stderr,
    )


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _name_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _p_value(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    return float(text)


def _is_raw(path: Path) -> bool:
    return TIME_TO_END in pd.read_csv(path, nrows=0).columns


def _has_labels(path: Path) -> bool:
    return LABEL_COLUMN in pd.read_csv(path, nrows=0).columns


def _read_raw(path: Path) -> RawDataset:
    return parse_dataset(path, has_labels=_has_labels(path))


def _read_features(path: Path, policy: MissingDataPolicy) -> FeatureDataset:
    """Accept either a raw radar file (derived with `policy`) or a feature file."""
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    if _is_raw(path):
        return derive_dataset(_read_raw(path), policy)
    return read_feature_file(path)


def _options(args: argparse.Namespace) -> PredictorOptions:
    return PredictorOptions(
        k=args.k,
        p=args.p,
        leaf_size=args.leaf,
        standardize=args.standardize,
        outlier_mm=args.outlier_mm,
        with_bias=args.with_bias,
        normalize_full_hour=args.normalize_full_hour,
        train=TrainConfig(
            max_iters=args.iters,
            learning_rate=args.lr,
            tolerance=args.tol,
            l1_lambda=args.l1,
        ),
        threads=args.threads,
        chunk_rows=args.chunk_rows,
    )


def _reference_cdf(args: argparse.Namespace) -> Optional[np.ndarray]:
    if args.reference_config is None:
        return None
    return label_marginal_cdf(load_synthetic_config(args.reference_config))


def _train_val(args: argparse.Namespace, policy: MissingDataPolicy) -> tuple[FeatureDataset, FeatureDataset]:
    """Feature datasets for a sweep: explicit --train/--val files, or a seeded split of --data."""
    if args.data is not None:
        data = _read_features(args.data, policy)
        return split(data, args.n_train, args.n_val, args.seed)
    if args.train is None or args.val is None:
        raise ConfigError("give either --data or both --train and --val")
    return _read_features(args.train, policy), _read_features(args.val, policy)


# ------------------------------------------------
# Commands
# ------------------------------------------------

def cmd_generate(args: argparse.Namespace) -> None:
    config = load_synthetic_config(args.config)
    serialize_dataset(generate_synthetic(config, args.seed), args.out)
    if args.test_config is not None or args.test_out is not None:
        if args.test_config is None or args.test_out is None:
            raise ConfigError("--test-config and --test-out must be given together")
        test_config = load_synthetic_config(args.test_config)
        # Offset the seed so train and test draws are independent
        serialize_dataset(generate_synthetic(test_config, args.seed + 1), args.test_out)


def cmd_derive(args: argparse.Namespace) -> None:
    policy = MissingDataPolicy.keep_all() if args.keep_rr23 else MissingDataPolicy()
    write_feature_file(derive_dataset(_read_raw(args.input), policy), args.out)


def cmd_train(args: argparse.Namespace) -> None:
    predictor = make_predictor(args.model, _options(args))
    data = _read_features(args.train, predictor.policy)
    predictor.fit(data)
    if args.model == "voting":
        save_voting(predictor.weights, args.out)
    elif args.model == "logistic":
        save_logistic(predictor.model, args.out)
    else:
        save_tree(predictor, args.out)


def _load_predictor(args: argparse.Namespace, options: PredictorOptions) -> Predictor:
    predictor = make_predictor(args.model, options)
    if args.model == "knn" and args.tree is not None:
        return load_tree(args.tree, k=options.k, p=options.p, threads=options.threads, chunk_rows=options.chunk_rows)
    if args.model_file is not None:
        if args.model == "voting":
            predictor.weights = load_voting(args.model_file)
        elif args.model == "logistic":
            predictor.model = load_logistic(args.model_file)
        else:
            raise ConfigError(f"--model-file is not used by {args.model}")
        return predictor
    if args.train is None:
        if args.model in ("norain", "sigmoid", "simpleavg"):
            return predictor
        raise ConfigError(f"{args.model} needs --train or a fitted model file")
    return predictor.fit(_read_features(args.train, predictor.policy))


def cmd_predict(args: argparse.Namespace) -> None:
    options = _options(args)
    predictor = _load_predictor(args, options)
    test = _read_features(args.test, predictor.policy)
    write_predictions(predictor.predict_matrix(test), args.out)


def cmd_score(args: argparse.Namespace) -> None:
    report = score(read_predictions(args.pred), read_labels(args.labels), args.chunk_rows, args.threads)
    logger.info(f"[CLI] Score {report.score:.8f} over {report.rows} rows")
    payload = report.model_dump()
    if args.report is None:
        print(json.dumps(payload, indent=2))
        return
    with open(args.report, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def cmd_sweep_k(args: argparse.Namespace) -> None:
    train, val = _train_val(args, MissingDataPolicy())
    result = sweep_k(
        train, val, args.k_values, p=args.p, leaf_size=args.leaf,
        threads=args.threads, chunk_rows=args.chunk_rows,
        reference_cdf=_reference_cdf(args),
    )
    result.config["seed"] = args.seed
    write_sweep(result, args.out_csv, args.out_json)


def cmd_sweep_size(args: argparse.Namespace) -> None:
    train, val = _train_val(args, MissingDataPolicy())
    result = sweep_size(
        train, val, args.sizes, k=args.k, p=args.p, seed=args.seed, leaf_size=args.leaf,
        threads=args.threads, chunk_rows=args.chunk_rows,
        reference_cdf=_reference_cdf(args),
    )
    write_sweep(result, args.out_csv, args.out_json)


def cmd_benchmark(args: argparse.Namespace) -> None:
    if args.data is not None:
        train, test = split(_read_raw(args.data), args.n_train, args.n_val, args.seed)
    elif args.train is not None and args.test is not None:
        train, test = _read_raw(args.train), _read_raw(args.test)
    else:
        raise ConfigError("give either --data or both --train and --test")
    table = run_benchmark(
        train, test, args.predictors, _options(args),
        pred_dir=args.pred_dir, reference_cdf=_reference_cdf(args),
    )
    table.config["seed"] = args.seed
    write_benchmark(table, args.out_csv, args.out_json)
    for row in table.rows:
        print(f"{row.predictor.value:<10} {row.score:.8f}")


def cmd_infer_histogram(args: argparse.Namespace) -> None:
    if args.labels is not None:
        proportions = infer_histogram(read_labels(args.labels), args.chunk_rows)
        frame = pd.DataFrame({"bin": np.arange(N_BINS), "proportion": proportions})
        if args.out is None:
            print(frame.to_csv(index=False), end="")
        else:
            frame.to_csv(args.out, index=False)
        return
    if args.all_ones_score is None or args.zeroed_score is None:
        raise ConfigError("give --labels, or both --all-ones-score and --zeroed-score")
    print(repr(infer_bin_proportion(args.all_ones_score, args.zeroed_score)))


# ------------------------------------------------
# Parser
# ------------------------------------------------

def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS lets the flags appear before or after the subcommand
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    parent.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    parent.add_argument("--log-level", default=argparse.SUPPRESS, help="DEBUG, INFO, WARNING or ERROR")
    parent.add_argument("--chunk-rows", type=int, default=argparse.SUPPRESS, help="rows per scoring/query chunk")
    return parent


def _add_hyperparameters(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=settings.k, help="neighbors for knn")
    p.add_argument("--p", type=_p_value, default=settings.p, help="l_p distance order (inf allowed)")
    p.add_argument("--leaf", type=int, default=settings.leaf_size, help="k-d tree leaf capacity")
    p.add_argument("--standardize", action="store_true", help="standardize knn features")
    p.add_argument("--outlier-mm", type=float, default=settings.outlier_mm, help="voting outlier bound (mm)")
    p.add_argument("--with-bias", action="store_true", help="add an intercept to the voting weights")
    p.add_argument("--normalize-full-hour", action="store_true", help="sigmoid: divide RR1 by a full hour")
    p.add_argument("--iters", type=int, default=settings.logistic_iters, help="logistic iterations")
    p.add_argument("--lr", type=float, default=settings.logistic_lr, help="logistic base step size")
    p.add_argument("--tol", type=float, default=settings.logistic_tol, help="logistic gradient tolerance")
    p.add_argument("--l1", type=float, default=settings.logistic_l1, help="logistic L1 penalty")


def _add_split(p: argparse.ArgumentParser, second: str) -> None:
    p.add_argument("--data", type=Path, default=None, help="labeled data to split")
    p.add_argument("--n-train", type=int, default=settings.n_train)
    p.add_argument("--n-val", type=int, default=settings.n_val)
    p.add_argument("--train", type=Path, default=None)
    p.add_argument(f"--{second}", type=Path, default=None)


def _add_outputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-csv", type=Path, default=None)
    p.add_argument("--out-json", type=Path, default=None)
    p.add_argument("--reference-config", type=Path, default=None,
                   help="synthetic config whose label distribution gives a reference score")


def build_parser() -> argparse.ArgumentParser:
    parent = _global_flags()
    parser = argparse.ArgumentParser(
        prog="raincdf",
        description="Hourly rainfall CDF prediction from radar features",
        parents=[parent],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[parent], help="generate a synthetic dataset")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--test-config", type=Path, default=None)
    p.add_argument("--test-out", type=Path, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("derive", parents=[parent], help="derive features from a raw dataset")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--keep-rr23", action="store_true", help="retain RR2/RR3 (zero-filled)")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("train", parents=[parent], help="fit and save a model")
    p.add_argument("--model", choices=TRAINABLE, required=True)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_hyperparameters(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[parent], help="write CDF predictions")
    p.add_argument("--model", choices=sorted(PREDICTORS), required=True)
    p.add_argument("--train", type=Path, default=None)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--model-file", type=Path, default=None, help="saved voting/logistic model")
    p.add_argument("--tree", type=Path, default=None, help="saved k-d tree")
    _add_hyperparameters(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", parents=[parent], help="score predictions against labels")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--report", type=Path, default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep-k", parents=[parent], help="knn score over a grid of k")
    _add_split(p, "val")
    p.add_argument("--k-values", type=_int_list, default=[1, 5, 15, 50, 150, 500, 5000])
    p.add_argument("--p", type=_p_value, default=settings.p)
    p.add_argument("--leaf", type=int, default=settings.leaf_size)
    _add_outputs(p)
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("sweep-size", parents=[parent], help="knn score over nested training sizes")
    _add_split(p, "val")
    p.add_argument("--sizes", type=_int_list, default=[333, 1000, 3333, 10000, 31623, 100000])
    p.add_argument("--k", type=int, default=settings.k)
    p.add_argument("--p", type=_p_value, default=settings.p)
    p.add_argument("--leaf", type=int, default=settings.leaf_size)
    _add_outputs(p)
    p.set_defaults(func=cmd_sweep_size)

    p = sub.add_parser("benchmark", parents=[parent], help="compare predictors on one train/test pair")
    _add_split(p, "test")
    p.add_argument("--predictors", type=_name_list, default=list(PREDICTORS))
    p.add_argument("--pred-dir", type=Path, default=None, help="also write each predictor's predictions")
    _add_hyperparameters(p)
    _add_outputs(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("infer-histogram", parents=[parent], help="test-label proportions from probe scores")
    p.add_argument("--labels", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--all-ones-score", type=float, default=None)
    p.add_argument("--zeroed-score", type=float, default=None)
    p.set_defaults(func=cmd_infer_histogram)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    args.seed = getattr(args, "seed", settings.seed)
    args.threads = getattr(args, "threads", settings.threads)
    args.chunk_rows = getattr(args, "chunk_rows", settings.chunk_rows)
    _configure_logging(getattr(args, "log_level", settings.log_level))

    try:
        args.func(args)
    except RainCdfError as e:
        logger.error(f"[CLI] {type(e).__name__}: {e}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"[CLI] invalid parameters: {e}")
        return ConfigError.exit_code
    except FileNotFoundError as e:
        logger.error(f"[CLI] {e}")
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
