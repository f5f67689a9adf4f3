"""Named experiment protocols: stratified-split benchmark, noise curves, the
mean-regularization sweep, and the two MNIST settings.

Every protocol draws all randomness from named substreams of one base seed
(split, noise, subsample, model init), so each component is independently
reproducible and whole runs are deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data_io import (
    RawTable,
    SplitSpec,
    add_gaussian_noise,
    clean_arrhythmia,
    load_arrhythmia,
    load_idx_images,
    load_idx_labels,
    pca_project,
    stratified_split,
)
from .model_core import Hyperparameters
from .reporting import ExperimentReport, ReportRow
from .svm_solver import train_linear_svm
from .trainer import TrainConfig, fit_exemplar, fit_one_vs_rest

logger = logging.getLogger(__name__)

NOISE_SIGMAS = (0.0, 0.1, 1.0, 10.0)
LAMBDA3_GRID = (0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1000.0)

# Solver controls for the benchmark scale: looser than the library defaults,
# recorded in every report's provenance.
ARRHYTHMIA_TOL_KKT = 1e-4
ARRHYTHMIA_MAX_EPOCHS = 4000
ARRHYTHMIA_OUTER_ITERS = 6
MNIST_TOL_KKT = 1e-3
MNIST_MAX_EPOCHS = 300
MNIST_OUTER_ITERS = 4


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _ovr_scores(weights, biases, features):
    return features @ np.asarray(weights).T + np.asarray(biases)


def _binary_and_multi_accuracy(weights, biases, classes, features, labels):
    """Mean per-class one-vs-rest accuracy and argmax accuracy, in percent."""
    scores = _ovr_scores(weights, biases, features)
    predicted = np.asarray(classes)[np.argmax(scores, axis=1)]
    multi = 100.0 * float(np.mean(predicted == labels))
    binary_accs = []
    for j, c in enumerate(classes):
        target = np.where(labels == c, 1.0, -1.0)
        sign = np.where(scores[:, j] >= 0.0, 1.0, -1.0)
        binary_accs.append(float(np.mean(sign == target)))
    return 100.0 * float(np.mean(binary_accs)), multi


def _train_ovr_baseline(x, y, classes, hp: Hyperparameters, seed: int):
    weights, biases = [], []
    for idx, c in enumerate(classes):
        target = np.where(y == c, 1.0, -1.0)
        sol = train_linear_svm(
            x,
            target,
            hp.lambda1 / 2.0,
            tol_kkt=hp.tol_kkt,
            max_epochs=hp.svm_max_epochs,
            seed=[seed, 101, idx],
        )
        weights.append(sol.w)
        biases.append(sol.b)
    return weights, biases


def _train_ovr_dictionary(x, y, hp: Hyperparameters, variant: str):
    config = TrainConfig(hp=hp, variant=variant)
    model = fit_one_vs_rest(x, y, config)
    weights = [tp.w for tp in model.per_class.tasks]
    biases = [tp.b for tp in model.per_class.tasks]
    return weights, biases, model.class_labels


def _method_hp(
    base: Hyperparameters, method: str, seed: int, lambda3: float
) -> Hyperparameters:
    if method == "mdsvm":
        return replace(base, lambda3=lambda3, seed=seed)
    return replace(base, lambda3=0.0, seed=seed)


def _arrhythmia_rounds(
    table,
    rounds: int,
    hp: Hyperparameters,
    seed: int,
    methods,
    lambda3: float,
    sigma: float = 0.0,
):
    """Shared engine for the benchmark table and the noise curve.

    Returns {(method, setting): [per-round accuracy %]}.
    """
    labels = table.labels
    classes = np.unique(labels)
    spec = SplitSpec(seed=_derived_seed(seed, 1))
    results = {(m, s): [] for m in methods for s in ("binary", "multi")}
    for r in range(rounds):
        train_idx, test_idx = stratified_split(labels, spec, r)
        x_train = table.rows[train_idx]
        x_test = table.rows[test_idx]
        if sigma > 0:
            x_train = add_gaussian_noise(x_train, sigma, _derived_seed(seed, 2, r, 0))
            x_test = add_gaussian_noise(x_test, sigma, _derived_seed(seed, 2, r, 1))
        y_train = labels[train_idx]
        y_test = labels[test_idx]
        for method in methods:
            round_seed = _derived_seed(seed, 3, r)
            method_hp = _method_hp(hp, method, round_seed, lambda3)
            if method == "svm":
                weights, biases = _train_ovr_baseline(
                    x_train, y_train, classes, method_hp, round_seed
                )
                model_classes = classes
            else:
                weights, biases, model_classes = _train_ovr_dictionary(
                    x_train, y_train, method_hp, "mdsvm" if method == "mdsvm" else "dsvm"
                )
            binary, multi = _binary_and_multi_accuracy(
                weights, biases, model_classes, x_test, y_test
            )
            results[(method, "binary")].append(binary)
            results[(method, "multi")].append(multi)
        logger.info("round %d/%d done (sigma=%g)", r + 1, rounds, sigma)
    return results


def _with_benchmark_controls(
    hp: Hyperparameters, tol_kkt: float, max_epochs: int, outer_iters: int
) -> Hyperparameters:
    """Apply the experiment-scale solver controls wherever the caller left
    the library defaults; explicit settings win."""
    defaults = Hyperparameters()
    return replace(
        hp,
        tol_kkt=tol_kkt if hp.tol_kkt == defaults.tol_kkt else hp.tol_kkt,
        svm_max_epochs=max_epochs
        if hp.svm_max_epochs == defaults.svm_max_epochs
        else hp.svm_max_epochs,
        max_outer_iters=outer_iters
        if hp.max_outer_iters == defaults.max_outer_iters
        else hp.max_outer_iters,
    )


def _benchmark_hp(base: Hyperparameters | None) -> Hyperparameters:
    hp = base if base is not None else Hyperparameters(lambda1=1.0, lambda2=1.0)
    return _with_benchmark_controls(
        hp, ARRHYTHMIA_TOL_KKT, ARRHYTHMIA_MAX_EPOCHS, ARRHYTHMIA_OUTER_ITERS
    )


def _subsample_table(table, scale: float, seed: int):
    if scale >= 1.0:
        return table
    rng = np.random.default_rng([seed, 7])
    keep = []
    for c in np.unique(table.labels):
        idx = np.flatnonzero(table.labels == c)
        n_keep = max(int(round(scale * idx.size)), 2)
        keep.append(rng.choice(idx, size=min(n_keep, idx.size), replace=False))
    keep = np.sort(np.concatenate(keep))
    return RawTable(
        rows=table.rows[keep],
        missing=table.missing[keep],
        labels=table.labels[keep],
        feature_names=table.feature_names,
    )


def _load_clean_arrhythmia(data_path, scale: float, seed: int):
    table = clean_arrhythmia(load_arrhythmia(data_path))
    return _subsample_table(table, scale, seed)


def _rows_from_results(results, rounds: int, extras_fn=None):
    rows = []
    for (method, setting), accs in sorted(results.items()):
        accs = np.asarray(accs, dtype=float)
        extras = extras_fn(method, setting) if extras_fn else {}
        rows.append(
            ReportRow(
                method=method,
                setting=setting,
                mean_accuracy=float(accs.mean()),
                std=float(accs.std(ddof=1)) if accs.size > 1 else 0.0,
                rounds=rounds,
                extras=extras,
            )
        )
    return rows


def _provenance(seed: int, hp: Hyperparameters, **extra) -> dict:
    out = {"seed": seed}
    for key, value in hp.to_dict().items():
        out[f"hp_{key}"] = value
    out.update(extra)
    return out


def run_arrhythmia(
    data_path,
    rounds: int = 50,
    hp: Hyperparameters | None = None,
    seed: int = 0,
    methods=("svm", "mdsvm", "dsvm"),
    lambda3: float = 1.0,
    scale: float = 1.0,
) -> ExperimentReport:
    """Accuracy table over repeated stratified splits, binary and multiclass."""
    hp = _benchmark_hp(hp)
    table = _load_clean_arrhythmia(data_path, scale, seed)
    results = _arrhythmia_rounds(table, rounds, hp, seed, methods, lambda3)
    return ExperimentReport(
        name="arrhythmia",
        rows=tuple(_rows_from_results(results, rounds)),
        provenance=_provenance(
            seed, hp, rounds=rounds, lambda3_mdsvm=lambda3, scale=scale,
            n_instances=table.n_samples, n_features=table.n_features,
            n_classes=int(np.unique(table.labels).size),
        ),
    )


def run_noise_curve(
    data_path,
    rounds: int = 10,
    hp: Hyperparameters | None = None,
    seed: int = 0,
    methods=("svm", "dsvm"),
    sigmas=NOISE_SIGMAS,
    lambda3: float = 1.0,
    scale: float = 1.0,
) -> ExperimentReport:
    """Accuracy against feature-noise level, one row per (sigma, method, setting)."""
    hp = _benchmark_hp(hp)
    table = _load_clean_arrhythmia(data_path, scale, seed)
    rows = []
    for s_idx, sigma in enumerate(sigmas):
        results = _arrhythmia_rounds(
            table, rounds, hp, _derived_seed(seed, 5, s_idx), methods, lambda3,
            sigma=sigma,
        )
        rows.extend(
            _rows_from_results(
                results, rounds, extras_fn=lambda m, s: {"sigma": float(sigma)}
            )
        )
    return ExperimentReport(
        name="noise_curve",
        rows=tuple(rows),
        provenance=_provenance(
            seed, hp, rounds=rounds, sigmas=";".join(repr(float(s)) for s in sigmas),
            lambda3_mdsvm=lambda3, scale=scale,
        ),
    )


def run_lambda3_sweep(
    data_path,
    rounds: int = 10,
    hp: Hyperparameters | None = None,
    seed: int = 0,
    grid=LAMBDA3_GRID,
    scale: float = 1.0,
) -> ExperimentReport:
    """Mean-regularization sensitivity: same splits across the whole grid."""
    hp = _benchmark_hp(hp)
    table = _load_clean_arrhythmia(data_path, scale, seed)
    per_lambda = {}
    for lam in grid:
        method = "mdsvm" if lam > 0 else "dsvm"
        results = _arrhythmia_rounds(
            table, rounds, hp, seed, (method,), lam
        )
        per_lambda[lam] = {
            "binary": float(np.mean(results[(method, "binary")])),
            "binary_std": float(np.std(results[(method, "binary")], ddof=1))
            if rounds > 1
            else 0.0,
            "multi": float(np.mean(results[(method, "multi")])),
            "multi_std": float(np.std(results[(method, "multi")], ddof=1))
            if rounds > 1
            else 0.0,
        }
    ranges = {
        setting: max(v[setting] for v in per_lambda.values())
        - min(v[setting] for v in per_lambda.values())
        for setting in ("binary", "multi")
    }
    rows = []
    for lam in grid:
        for setting in ("binary", "multi"):
            rows.append(
                ReportRow(
                    method="mdsvm",
                    setting=setting,
                    mean_accuracy=per_lambda[lam][setting],
                    std=per_lambda[lam][f"{setting}_std"],
                    rounds=rounds,
                    extras={
                        "lambda3": float(lam),
                        "accuracy_range": ranges[setting],
                    },
                )
            )
    return ExperimentReport(
        name="lambda3_sweep",
        rows=tuple(rows),
        provenance=_provenance(
            seed, hp, rounds=rounds, scale=scale,
            grid=";".join(repr(float(v)) for v in grid),
            binary_accuracy_range=ranges["binary"],
            multi_accuracy_range=ranges["multi"],
        ),
    )


def _mnist_paths(data_dir):
    names = {
        "train_images": "train-images-idx3-ubyte",
        "train_labels": "train-labels-idx1-ubyte",
        "test_images": "t10k-images-idx3-ubyte",
        "test_labels": "t10k-labels-idx1-ubyte",
    }
    out = {}
    for key, stem in names.items():
        plain = Path(data_dir) / stem
        gz = Path(data_dir) / (stem + ".gz")
        if plain.exists():
            out[key] = plain
        elif gz.exists():
            out[key] = gz
        else:
            raise FileNotFoundError(f"missing MNIST file {stem}[.gz] in {data_dir}")
    return out


def _load_mnist(data_dir):
    paths = _mnist_paths(data_dir)
    return (
        load_idx_images(paths["train_images"]),
        load_idx_labels(paths["train_labels"]),
        load_idx_images(paths["test_images"]),
        load_idx_labels(paths["test_labels"]),
    )


def _mnist_hp(base: Hyperparameters | None) -> Hyperparameters:
    hp = base if base is not None else Hyperparameters(lambda1=1.0, lambda2=10.0)
    return _with_benchmark_controls(
        hp, MNIST_TOL_KKT, MNIST_MAX_EPOCHS, MNIST_OUTER_ITERS
    )


def run_mnist_class(
    data_dir,
    rounds: int = 3,
    hp: Hyperparameters | None = None,
    seed: int = 0,
    n_train: int = 10_000,
    scale: float = 1.0,
) -> ExperimentReport:
    """Ten one-vs-rest digit classifiers from a training subsample, full test set."""
    hp = _mnist_hp(hp)
    n_train = max(int(round(n_train * scale)), 100)
    x_train_all, y_train_all, x_test, y_test = _load_mnist(data_dir)
    classes = np.unique(y_train_all)
    errors = {"svm": [], "dsvm": []}
    for r in range(rounds):
        rng = np.random.default_rng([seed, 21, r])
        subset = rng.choice(x_train_all.shape[0], size=n_train, replace=False)
        x_train = x_train_all[subset]
        y_train = y_train_all[subset]
        round_seed = _derived_seed(seed, 22, r)
        round_hp = replace(hp, seed=round_seed, lambda3=0.0)
        weights, biases = _train_ovr_baseline(
            x_train, y_train, classes, round_hp, round_seed
        )
        _, multi = _binary_and_multi_accuracy(
            weights, biases, classes, x_test, y_test
        )
        errors["svm"].append(100.0 - multi)
        weights, biases, model_classes = _train_ovr_dictionary(
            x_train, y_train, round_hp, "dsvm"
        )
        _, multi = _binary_and_multi_accuracy(
            weights, biases, model_classes, x_test, y_test
        )
        errors["dsvm"].append(100.0 - multi)
        logger.info(
            "mnist_class round %d/%d: svm err %.2f, dsvm err %.2f",
            r + 1, rounds, errors["svm"][-1], errors["dsvm"][-1],
        )
    rows = []
    for method in ("dsvm", "svm"):
        errs = np.asarray(errors[method])
        rows.append(
            ReportRow(
                method=method,
                setting="category",
                mean_accuracy=float(100.0 - errs.mean()),
                std=float(errs.std(ddof=1)) if errs.size > 1 else 0.0,
                rounds=rounds,
            )
        )
    return ExperimentReport(
        name="mnist_class",
        rows=tuple(rows),
        provenance=_provenance(seed, hp, rounds=rounds, n_train=n_train, scale=scale),
    )


def run_mnist_exemplar(
    data_dir,
    hp: Hyperparameters | None = None,
    seed: int = 0,
    n_exemplars: int = 500,
    n_negatives: int = 1000,
    n_test: int = 2000,
    pca_dim: int = 80,
    pca_fit_samples: int = 20_000,
    scale: float = 1.0,
) -> ExperimentReport:
    """Exemplar classifiers (one positive each) trained per digit category.

    The dictionary-coupled variant shares atoms within each category; the
    baseline trains every exemplar independently.  Test points take the
    category of the highest-scoring exemplar.
    """
    hp = _mnist_hp(hp)
    n_exemplars = max(int(round(n_exemplars * scale)), 20)
    n_negatives = max(int(round(n_negatives * scale)), 100)
    x_train_all, y_train_all, x_test_all, y_test_all = _load_mnist(data_dir)
    _, basis, mean = pca_project(x_train_all[:pca_fit_samples], pca_dim)
    train = (x_train_all - mean) @ basis
    test = (x_test_all[:n_test] - mean) @ basis
    test_labels = y_test_all[:n_test]

    classes = np.unique(y_train_all)
    per_class = max(n_exemplars // classes.size, 2)
    rng = np.random.default_rng([seed, 31])
    exemplar_ids, exemplar_vectors, exemplar_class = [], [], []
    joint_weights, joint_biases = [], []
    indep_weights, indep_biases = [], []
    for c in classes:
        own = np.flatnonzero(y_train_all == c)
        other = np.flatnonzero(y_train_all != c)
        chosen = rng.choice(own, size=per_class, replace=False)
        negatives_idx = rng.choice(other, size=n_negatives, replace=False)
        positives = [train[i] for i in chosen]
        negatives = train[negatives_idx]
        ids = [f"{c}#{k}" for k in range(per_class)]
        config = TrainConfig(
            hp=replace(hp, seed=_derived_seed(seed, 32, int(c)), lambda3=0.0),
            variant="dsvm",
        )
        state = fit_exemplar(positives, negatives, config, task_ids=ids)
        for tid, tp, pos in zip(ids, state.tasks, positives):
            exemplar_ids.append(tid)
            exemplar_class.append(c)
            exemplar_vectors.append(pos)
            joint_weights.append(tp.w)
            joint_biases.append(tp.b)
        stacked = np.concatenate([[1.0], -np.ones(n_negatives)])
        for pos in positives:
            features = np.vstack([pos[None, :], negatives])
            sol = train_linear_svm(
                features,
                stacked,
                hp.lambda1 / 2.0,
                tol_kkt=hp.tol_kkt,
                max_epochs=hp.svm_max_epochs,
                seed=[seed, 33, int(c)],
            )
            indep_weights.append(sol.w)
            indep_biases.append(sol.b)
        logger.info("mnist_exemplar category %s trained", c)

    exemplar_class = np.asarray(exemplar_class)

    def top_exemplar_error(weights, biases):
        scores = test @ np.asarray(weights).T + np.asarray(biases)
        best = np.argmax(scores, axis=1)
        predicted = exemplar_class[best]
        return 100.0 * float(np.mean(predicted != test_labels))

    rows = (
        ReportRow(
            method="dsvm",
            setting="instance",
            mean_accuracy=100.0 - top_exemplar_error(joint_weights, joint_biases),
            std=0.0,
            rounds=1,
        ),
        ReportRow(
            method="svm",
            setting="instance",
            mean_accuracy=100.0 - top_exemplar_error(indep_weights, indep_biases),
            std=0.0,
            rounds=1,
        ),
    )
    return ExperimentReport(
        name="mnist_exemplar",
        rows=rows,
        provenance=_provenance(
            seed, hp, n_exemplars=per_class * classes.size,
            n_negatives=n_negatives, n_test=n_test, pca_dim=pca_dim, scale=scale,
        ),
    )


EXPERIMENTS = {
    "arrhythmia": run_arrhythmia,
    "noise_curve": run_noise_curve,
    "lambda3_sweep": run_lambda3_sweep,
    "mnist_class": run_mnist_class,
    "mnist_exemplar": run_mnist_exemplar,
}
