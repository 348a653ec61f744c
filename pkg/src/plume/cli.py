"""Command-line surface: train, predict, crossval, synth, and bound.

Reports are JSON and go to --out or standard output; logs go to
standard error at the level named by the PLUME_LOG environment variable.
Exit codes are stable: 0 success, 1 usage or configuration error,
2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bounds import bound_for_model
from .crossval import cross_validate
from .data import (
    CsvSchema,
    CvPlan,
    SynthSpec,
    check_class_counts,
    load_csv,
    save_synthetic,
    standardize,
    synthesize,
)
from .em import InitScheme, TrainConfig, fit, predict
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    NumericalError,
    PlumeError,
)
from .model import Dataset, augment
from .model_io import file_fingerprint, load_model, save_model
from .optim import Optimizer

__all__ = ["main", "build_parser"]

logger = logging.getLogger("plume.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; raise instead so
    # main() can map them onto the documented exit-code contract.
    def error(self, message):
        raise ConfigError(message)


def _setup_logging() -> None:
    level_name = os.environ.get("PLUME_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(stream=sys.stderr, level=level, format="%(name)s: %(message)s")


def _write_json(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _write_text(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _parse_counts(raw: str) -> tuple[int, int]:
    parts = raw.split("/")
    if len(parts) != 2:
        raise ConfigError(f"--expect-counts wants 'A/B', got {raw!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"--expect-counts wants integers, got {raw!r}") from None


def _int_list(raw: str, flag: str) -> list[int]:
    try:
        return [int(piece) for piece in raw.split(",") if piece != ""]
    except ValueError:
        raise ConfigError(f"{flag} wants comma-separated integers, got {raw!r}") from None


def _float_list(raw: str, flag: str) -> list[float]:
    try:
        return [float(piece) for piece in raw.split(",") if piece != ""]
    except ValueError:
        raise ConfigError(f"{flag} wants comma-separated numbers, got {raw!r}") from None


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="path to a delimited data file")
    parser.add_argument("--label-column", type=int, default=-1,
                        help="raw column holding the label (default: last)")
    parser.add_argument("--has-header", action="store_true",
                        help="skip the first line of the data file")
    parser.add_argument("--delimiter", default=",", help="cell delimiter (default ',')")
    parser.add_argument("--expect-counts", default=None, metavar="A/B",
                        help="fail unless the class sizes match this pair")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gamma", default="1.0", help="gating sharpness (crossval: comma list)")
    parser.add_argument("--epsilon", type=float, default=1e-6,
                        help="log-likelihood improvement tolerance")
    parser.add_argument("--epsilon-mode", choices=("mean", "total"), default="mean",
                        help="compare epsilon against the per-example or total improvement")
    parser.add_argument("--optimizer", choices=[o.value for o in Optimizer], default="ga")
    parser.add_argument("--init", choices=[i.value for i in InitScheme], default="random")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-iters", type=int, default=500,
                        help="cap on outer training iterations")
    parser.add_argument("--restarts", type=int, default=1,
                        help="independent restarts; best final likelihood wins")
    parser.add_argument("--no-standardize", action="store_true",
                        help="skip per-column feature standardization")


def _load_dataset(args) -> Dataset:
    schema = CsvSchema(
        label_column=args.label_column,
        has_header=args.has_header,
        delimiter=args.delimiter,
    )
    data = load_csv(args.data, schema)
    if args.expect_counts:
        check_class_counts(data, _parse_counts(args.expect_counts))
    return data


def _train_config(args, k: int, gamma: float) -> TrainConfig:
    return TrainConfig(
        k_experts=k,
        gamma=gamma,
        epsilon=args.epsilon,
        optimizer=args.optimizer,
        max_em_iters=args.max_iters,
        init=args.init,
        seed=args.seed,
        epsilon_per_example=(args.epsilon_mode == "mean"),
    )


def _single_gamma(args) -> float:
    gammas = _float_list(args.gamma, "--gamma")
    if len(gammas) != 1:
        raise ConfigError("this subcommand wants a single --gamma value")
    return gammas[0]


def cmd_train(args) -> None:
    data = _load_dataset(args)
    scale = None
    if not args.no_standardize:
        data = standardize(data)
        scale = data.feature_scale
    cfg = _train_config(args, args.k, _single_gamma(args))
    report = fit(cfg, data, restarts=args.restarts)
    metadata = {
        "seed": cfg.seed,
        "optimizer": cfg.optimizer.value,
        "init": cfg.init.value,
        "gamma": cfg.gamma,
        "epsilon": cfg.epsilon,
        "epsilon_mode": args.epsilon_mode,
        "restarts": args.restarts,
        "standardized": not args.no_standardize,
        "dataset_fingerprint": file_fingerprint(args.data),
    }
    save_model(args.out, report.final_params, scale, metadata)
    report_doc = {
        "model_file": str(args.out),
        "train_accuracy": report.train_accuracy,
        "em_iterations": report.em_iterations,
        "converged": report.converged,
        "wall_time": report.wall_time,
        "ll_trajectory": list(report.ll_trajectory),
        "config": metadata,
    }
    _write_json(report_doc, args.report or str(args.out) + ".report.json")
    logger.info("trained %s: accuracy %.4f in %d iterations",
                args.out, report.train_accuracy, report.em_iterations)


def cmd_predict(args) -> None:
    loaded = load_model(args.model)
    schema = CsvSchema(has_header=args.has_header, delimiter=args.delimiter)
    path = Path(args.data)
    if not path.is_file():
        raise DataError(f"no such data file: {path}")
    import csv as _csv

    with path.open(newline="") as handle:
        rows = [[c.strip() for c in row] for row in _csv.reader(handle, delimiter=schema.delimiter) if row]
    if schema.has_header and rows:
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path} contains no data rows")
    try:
        features = np.asarray([[float(c) for c in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise DataError(f"non-numeric feature cell in {path}: {exc}") from None
    if features.shape[1] != loaded.params.n_features:
        raise DimensionError(
            f"model expects {loaded.params.n_features} features, data has {features.shape[1]}",
            expected=loaded.params.n_features,
            actual=features.shape[1],
        )
    if loaded.feature_scale is not None:
        features = loaded.feature_scale.transform(features)
    margins = (augment(features) @ loaded.params.weights.T).min(axis=1)
    labels = np.where(margins >= 0.0, 1, -1)
    if args.margins:
        lines = [f"{int(l)},{repr(float(m))}" for l, m in zip(labels, margins)]
    else:
        lines = [str(int(l)) for l in labels]
    _write_text("\n".join(lines) + "\n", args.out)


def cmd_crossval(args) -> None:
    data = _load_dataset(args)
    plan = CvPlan(
        n_folds=args.folds,
        n_repeats=args.repeats,
        seed=args.seed,
        stratified=args.stratified,
    )
    ks = _int_list(str(args.k), "--k")
    gammas = _float_list(args.gamma, "--gamma")
    if not ks or not gammas:
        raise ConfigError("--k and --gamma must name at least one value")
    cells = []
    for k in ks:
        for gamma in gammas:
            cfg = _train_config(args, k, gamma)
            report = cross_validate(
                cfg,
                data,
                plan,
                standardize_features=not args.no_standardize,
                jobs=args.jobs,
                restarts=args.restarts,
            )
            cells.append({"k": k, "gamma": gamma, "report": report.as_dict()})
            logger.info("crossval k=%d gamma=%g: accuracy %.4f +/- %.4f",
                        k, gamma, report.mean_accuracy, report.std_accuracy)
    best = max(cells, key=lambda cell: cell["report"]["mean_accuracy"])
    doc = {
        "best": {"k": best["k"], "gamma": best["gamma"]},
        "mean_accuracy": best["report"]["mean_accuracy"],
        "std_accuracy": best["report"]["std_accuracy"],
        "mean_train_time": best["report"]["mean_train_time"],
        "cells": cells,
    }
    _write_json(doc, args.out)


def cmd_synth(args) -> None:
    spec = SynthSpec(
        k_hyperplanes=args.k,
        dim=args.dim,
        n_points=args.n,
        margin=args.margin,
        noise_flip=args.noise,
        seed=args.seed,
    )
    data, true_params = synthesize(spec)
    sidecar = save_synthetic(data, true_params, spec, args.out)
    logger.info("wrote %s (+ %s): %d points, classes %s",
                args.out, sidecar, data.n_samples, data.class_counts())


def cmd_bound(args) -> None:
    loaded = load_model(args.model)
    schema = CsvSchema(
        label_column=args.label_column,
        has_header=args.has_header,
        delimiter=args.delimiter,
    )
    data = load_csv(args.data, schema)
    features = data.features
    if loaded.feature_scale is not None:
        features = loaded.feature_scale.transform(features)
    data = Dataset(features, np.array(data.labels))
    report = bound_for_model(loaded.params, data, args.delta)
    doc = {
        "delta": args.delta,
        "n_samples": data.n_samples,
        "c1": report.c1,
        "c2": report.c2,
        "rademacher_bound": report.rademacher_bound,
        "empirical_risk": report.empirical_risk,
        "risk_bound": report.risk_bound,
        "w_max": report.w_max,
        "w_min": report.w_min,
        "vacuous": report.vacuous,
    }
    _write_json(doc, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plume", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a model and write it to disk")
    _add_data_flags(p_train)
    _add_train_flags(p_train)
    p_train.add_argument("--k", type=int, required=True, help="number of hyperplanes")
    p_train.add_argument("--out", required=True, help="model file to write")
    p_train.add_argument("--report", default=None,
                         help="report path (default: <out>.report.json)")
    p_train.set_defaults(func=cmd_train)

    p_predict = sub.add_parser("predict", help="label feature rows with a saved model")
    p_predict.add_argument("--model", required=True)
    p_predict.add_argument("--data", required=True, help="feature rows, no label column")
    p_predict.add_argument("--has-header", action="store_true")
    p_predict.add_argument("--delimiter", default=",")
    p_predict.add_argument("--margins", action="store_true",
                           help="append the decision margin to each line")
    p_predict.add_argument("--out", default=None)
    p_predict.set_defaults(func=cmd_predict)

    p_cv = sub.add_parser("crossval", help="repeated k-fold accuracy protocol")
    _add_data_flags(p_cv)
    _add_train_flags(p_cv)
    p_cv.add_argument("--k", required=True,
                      help="hyperplane count, or comma list for grid search")
    p_cv.add_argument("--folds", type=int, default=10)
    p_cv.add_argument("--repeats", type=int, default=10)
    p_cv.add_argument("--stratified", action="store_true")
    p_cv.add_argument("--jobs", type=int, default=1,
                      help="concurrent fold evaluations")
    p_cv.add_argument("--out", default=None)
    p_cv.set_defaults(func=cmd_crossval)

    p_synth = sub.add_parser("synth", help="generate separable synthetic data")
    p_synth.add_argument("--k", type=int, required=True, help="number of hyperplanes")
    p_synth.add_argument("--dim", type=int, required=True)
    p_synth.add_argument("--n", type=int, required=True, help="number of points")
    p_synth.add_argument("--margin", type=float, default=0.0)
    p_synth.add_argument("--noise", type=float, default=0.0,
                         help="fraction of labels to flip")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="CSV path; sidecar JSON sits next to it")
    p_synth.set_defaults(func=cmd_synth)

    p_bound = sub.add_parser("bound", help="generalization bound for a saved model")
    p_bound.add_argument("--model", required=True)
    _add_data_flags(p_bound)
    p_bound.add_argument("--delta", type=float, default=0.05)
    p_bound.add_argument("--out", default=None)
    p_bound.set_defaults(func=cmd_bound)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, PlumeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
