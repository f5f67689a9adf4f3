"""Command-line entry point: train / eval / experiment / fetch.

Exit codes: 0 success, 2 usage or I/O problems, 3 numerical failure during
training.  All randomness flows from --seed through named substreams, and a
rerun with the same arguments reproduces model JSON and experiment CSV files
byte for byte.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data_io import (
    add_gaussian_noise,
    fetch_arrhythmia,
    fetch_mnist,
    load_dense_csv,
    load_sparse_text,
)
from .experiments import EXPERIMENTS
from .model_core import Hyperparameters, load_model, state_to_json
from .reporting import figure_path_for, render_report_figure, write_report_csv
from .svm_solver import predict
from .trainer import TrainConfig, TrainingError, fit, fit_exemplar, fit_one_vs_rest

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _add_hyper_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda1", type=float, default=1.0, help="hinge-loss weight")
    parser.add_argument(
        "--lambda2", type=float, default=10.0, help="covariance-regularization weight"
    )
    parser.add_argument(
        "--lambda3", type=float, default=0.0, help="mean-regularization weight"
    )
    parser.add_argument("--gamma", type=float, default=0.1, help="l1 weight on alpha")
    parser.add_argument(
        "--nu", type=float, default=1e3, help="covariance-coupling penalty"
    )
    parser.add_argument(
        "--dict-size", type=int, default=None, help="atom count (default 2T capped at 400)"
    )
    parser.add_argument(
        "--max-outer-iters", type=int, default=None, help="outer iteration cap"
    )
    parser.add_argument("--seed", type=int, default=0, help="base random seed")


def _hp_from_args(args) -> Hyperparameters:
    hp = Hyperparameters(
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        lambda3=args.lambda3,
        gamma=args.gamma,
        nu=args.nu,
        dict_size=args.dict_size,
        seed=args.seed,
    )
    if args.max_outer_iters is not None:
        hp = replace(hp, max_outer_iters=args.max_outer_iters)
    return hp


def _load_table(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such data file: {path}")
    if path.suffix == ".csv":
        return load_dense_csv(path)
    return load_sparse_text(path)


def cmd_train(args) -> int:
    table = _load_table(args.data)
    features = table.rows
    if table.missing.any():
        raise ValueError("training data contains missing values; clean it first")
    if args.sigma > 0:
        features = add_gaussian_noise(features, args.sigma, [args.seed, 91])
    labels = table.labels
    hp = _hp_from_args(args)
    variant = args.variant
    config = TrainConfig(hp=hp, variant=variant)

    progress = open(args.log, "w", encoding="ascii") if args.log else None
    try:
        if args.mode == "binary":
            if not set(np.unique(labels)) <= {-1, 1}:
                raise ValueError("binary mode expects labels in {-1, +1}")
            from .model_core import TaskDataset

            state = fit(
                [TaskDataset("task0", features, labels.astype(float))],
                config,
                progress,
            )
            task_ids = ["task0"]
        elif args.mode == "multi":
            model = fit_one_vs_rest(features, labels, config, progress)
            state = model.per_class
            task_ids = [str(c) for c in model.class_labels]
        else:  # exemplar: +1 rows are exemplars, -1 rows the shared negatives
            if not set(np.unique(labels)) <= {-1, 1}:
                raise ValueError(
                    "exemplar mode expects labels in {-1, +1}: +1 rows are "
                    "exemplars, -1 rows the shared negative pool"
                )
            positives = [row for row in features[labels == 1]]
            negatives = features[labels == -1]
            task_ids = [f"exemplar#{i}" for i in range(len(positives))]
            state = fit_exemplar(positives, negatives, config, task_ids, progress)
    finally:
        if progress is not None:
            progress.close()

    text = state_to_json(state, hp, task_ids)
    out = Path(args.out)
    tmp = out.with_suffix(out.suffix + ".tmp")
    tmp.write_text(text, encoding="ascii")
    tmp.replace(out)
    print(f"wrote model with {len(task_ids)} task(s) to {out}")
    if args.test:
        rows = _eval_rows(state, task_ids, _load_table(args.test), args.mode)
        sys.stdout.write("\n".join(",".join(row) for row in rows) + "\n")
    return EXIT_OK


def _eval_rows(state, task_ids, table, mode):
    features = table.rows
    labels = table.labels
    m_model = state.dictionary.n_features
    if features.shape[1] != m_model:
        raise ValueError(
            f"model expects {m_model} features but data has {features.shape[1]}"
        )
    rows = [("metric", "task", "value")]
    if mode == "binary":
        scores = predict(state.tasks[0].w, state.tasks[0].b, features)
        predicted = np.where(scores >= 0.0, 1, -1)
        accuracy = 100.0 * float(np.mean(predicted == labels))
        rows.append(("accuracy", task_ids[0], repr(accuracy)))
        rows.append(("error", task_ids[0], repr(100.0 - accuracy)))
    elif mode == "multi":
        scores = np.column_stack(
            [predict(tp.w, tp.b, features) for tp in state.tasks]
        )
        classes = [int(tid) for tid in task_ids]
        predicted = np.asarray(classes)[np.argmax(scores, axis=1)]
        accuracy = 100.0 * float(np.mean(predicted == labels))
        rows.append(("accuracy", "all", repr(accuracy)))
        rows.append(("error", "all", repr(100.0 - accuracy)))
    else:  # exemplar: rank test rows per exemplar, plus argmax category accuracy
        scores = np.column_stack(
            [predict(tp.w, tp.b, features) for tp in state.tasks]
        )
        categories = []
        for tid in task_ids:
            categories.append(tid.split("#", 1)[0] if "#" in tid else tid)
        for j, tid in enumerate(task_ids):
            try:
                cat = int(categories[j])
            except ValueError:
                cat = categories[j]
            same = labels == cat
            if same.any() and (~same).any():
                pos, neg = scores[same, j], scores[~same, j]
                better = (pos[:, None] > neg[None, :]).mean()
                ties = (pos[:, None] == neg[None, :]).mean()
                rows.append(("ranking_auc", tid, repr(float(better + 0.5 * ties))))
        try:
            cat_values = np.asarray([int(c) for c in categories])
        except ValueError:
            cat_values = np.asarray(categories)
        predicted = cat_values[np.argmax(scores, axis=1)]
        accuracy = 100.0 * float(np.mean(predicted == labels))
        rows.append(("accuracy", "all", repr(accuracy)))
        rows.append(("error", "all", repr(100.0 - accuracy)))
    return rows


def cmd_eval(args) -> int:
    state, _, task_ids = load_model(args.model)
    table = _load_table(args.data)
    rows = _eval_rows(state, task_ids, table, args.mode)
    text = "\n".join(",".join(row) for row in rows) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="ascii")
        print(f"wrote metrics to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(args) -> int:
    runner = EXPERIMENTS[args.name]
    hp = _hp_from_args(args)
    kwargs = dict(hp=hp, seed=args.seed, scale=args.scale)
    if args.name in ("arrhythmia", "noise_curve", "lambda3_sweep"):
        kwargs["data_path"] = args.data
        if args.rounds is not None:
            kwargs["rounds"] = args.rounds
        if args.name in ("arrhythmia", "noise_curve") and args.lambda3 > 0:
            kwargs["lambda3"] = args.lambda3
    else:
        kwargs["data_dir"] = args.data
        if args.rounds is not None and args.name == "mnist_class":
            kwargs["rounds"] = args.rounds
    report = runner(**kwargs)
    out = Path(args.out)
    write_report_csv(report, out)
    figure = figure_path_for(out)
    render_report_figure(report, figure)
    print(f"wrote {out} and {figure}")
    return EXIT_OK


def cmd_fetch(args) -> int:
    if args.dataset == "arrhythmia":
        path = fetch_arrhythmia(args.dest)
        print(f"fetched {path}")
    else:
        paths = fetch_mnist(args.dest)
        for name in sorted(paths):
            print(f"fetched {paths[name]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsvm",
        description="Multi-task linear SVM training with a shared covariance dictionary",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write model JSON")
    p_train.add_argument("--data", required=True, help="training data (.svm or .csv)")
    p_train.add_argument(
        "--test", default=None, help="optional held-out data to evaluate after training"
    )
    p_train.add_argument(
        "--mode", choices=("binary", "multi", "exemplar"), default="binary"
    )
    p_train.add_argument("--variant", choices=("dsvm", "mdsvm"), default="dsvm")
    p_train.add_argument("--sigma", type=float, default=0.0, help="train-time noise")
    p_train.add_argument("--out", required=True, help="model JSON output path")
    p_train.add_argument("--log", default=None, help="JSONL progress log path")
    _add_hyper_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a model on labeled data")
    p_eval.add_argument("--model", required=True, help="model JSON path")
    p_eval.add_argument("--data", required=True, help="evaluation data (.svm or .csv)")
    p_eval.add_argument(
        "--mode", choices=("binary", "multi", "exemplar"), default="binary"
    )
    p_eval.add_argument("--out", default=None, help="metrics CSV path (default stdout)")
    p_eval.set_defaults(func=cmd_eval)

    p_exp = sub.add_parser("experiment", help="run a named experiment harness")
    p_exp.add_argument("name", choices=sorted(EXPERIMENTS))
    p_exp.add_argument(
        "--data",
        required=True,
        help="arrhythmia data file, or MNIST directory for mnist_* experiments",
    )
    p_exp.add_argument("--rounds", type=int, default=None, help="repetition count")
    p_exp.add_argument(
        "--scale", type=float, default=1.0, help="shrink factor for desk-scale runs"
    )
    p_exp.add_argument("--out", required=True, help="report CSV path")
    _add_hyper_flags(p_exp)
    p_exp.set_defaults(func=cmd_experiment)

    p_fetch = sub.add_parser("fetch", help="download a dataset")
    p_fetch.add_argument("--dataset", choices=("arrhythmia", "mnist"), required=True)
    p_fetch.add_argument("--dest", default="data", help="destination directory")
    p_fetch.set_defaults(func=cmd_fetch)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("DSVM_LOG", "WARNING"),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
