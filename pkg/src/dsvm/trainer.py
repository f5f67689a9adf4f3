"""Alternating-minimization driver for the dictionary-covariance SVM variants.

One outer iteration runs three blocks in fixed order: per-task w-step
(covariance-weighted SVM solve), per-task coefficient/covariance sweeps
(nonnegative LASSO alternated with the closed-form diagonal update), and the
projected-gradient dictionary step.  The objective is recorded after every
block.  Everything is sequential and deterministic: per-task solver RNG is
seeded from (seed, task index, outer iteration), so results do not depend on
scheduling.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .dict_learner import (
    CubicUpdateInputs,
    project_capped_simplex,
    update_delta,
    update_dictionary,
)
from .lasso_solver import LassoProblem, build_mean_reg_system, solve_lasso
from .model_core import (
    EPS_DELTA,
    DictionaryModel,
    Hyperparameters,
    TaskDataset,
    TaskParameters,
    TrainState,
    evaluate_objective,
)
from .svm_solver import predict, train_linear_svm, train_reweighted

VARIANTS = ("dsvm", "mdsvm")
INIT_STRATEGIES = ("independent_svm", "zeros")


class TrainingError(RuntimeError):
    """A sub-solver failed; the message names the offending task."""


@dataclass(frozen=True)
class TrainConfig:
    """Training controls on top of the shared hyperparameters.

    freeze_dictionary / freeze_alpha / dictionary_init / alpha_init exist for
    controlled reductions (e.g. pinning the model to a fixed covariance);
    normal training leaves them at their defaults.
    """

    hp: Hyperparameters
    variant: str = "dsvm"
    inner_ad_sweeps: int = 3
    init_strategy: str = "independent_svm"
    freeze_dictionary: bool = False
    freeze_alpha: bool = False
    dictionary_init: np.ndarray | None = None
    alpha_init: tuple | None = None
    dict_steps_per_iter: int = 25
    warmup_iterations: int = 2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"init_strategy must be one of {INIT_STRATEGIES}")
        if self.inner_ad_sweeps < 1:
            raise ValueError("inner_ad_sweeps must be >= 1")
        if self.dict_steps_per_iter < 0:
            raise ValueError("dict_steps_per_iter must be >= 0")
        if self.warmup_iterations < 0:
            raise ValueError("warmup_iterations must be >= 0")


@dataclass(frozen=True)
class MulticlassModel:
    """One-vs-rest reduction: tasks of per_class align with class_labels."""

    class_labels: tuple
    per_class: TrainState

    def __post_init__(self):
        object.__setattr__(self, "class_labels", tuple(self.class_labels))
        if len(self.class_labels) < 2:
            raise ValueError("multiclass model needs at least two classes")
        if len(self.per_class.tasks) != len(self.class_labels):
            raise ValueError("per_class tasks must align with class_labels")


def _hinge_sum(ds: TaskDataset, w: np.ndarray, b: float) -> float:
    margins = ds.labels * (ds.features @ w + b)
    return float(np.maximum(0.0, 1.0 - margins).sum())


def _initialize(datasets, config: TrainConfig, k: int):
    hp = config.hp
    m = datasets[0].n_features
    t_count = len(datasets)
    rng = np.random.default_rng([hp.seed, 17])

    if config.init_strategy == "zeros":
        ws = [np.zeros(m) for _ in range(t_count)]
        bs = [0.0] * t_count
        deltas = [np.full(m, EPS_DELTA) for _ in range(t_count)]
        alphas = [np.zeros(k) for _ in range(t_count)]
        duals = [None] * t_count
        atoms = np.full((m, k), 1.0 / (2.0 * m))
    else:
        ws, bs, deltas, duals = [], [], [], []
        for t, ds in enumerate(datasets):
            try:
                sol = train_linear_svm(
                    ds.features,
                    ds.labels,
                    hp.lambda1 / 2.0,
                    tol_kkt=hp.tol_kkt,
                    max_epochs=hp.svm_max_epochs,
                    seed=[hp.seed, 0, t],
                )
            except Exception as exc:
                raise TrainingError(f"task {ds.task_id}: init SVM failed: {exc}") from exc
            ws.append(np.asarray(sol.w))
            bs.append(sol.b)
            deltas.append(np.maximum(sol.w**2, EPS_DELTA))
            duals.append(sol.dual_coeffs)
        atoms = np.empty((m, k))
        delta_stack = np.stack(deltas)
        for j in range(k):
            mix = rng.random(t_count)
            mix /= mix.sum()
            atoms[:, j] = project_capped_simplex(mix @ delta_stack)
        alphas = None  # filled below, after the dictionary is final

    if config.dictionary_init is not None:
        atoms = np.array(config.dictionary_init, dtype=float)
        DictionaryModel(atoms)  # validate entries and column caps
        if atoms.shape != (m, k):
            raise ValueError(
                f"dictionary_init shape {atoms.shape} does not match ({m}, {k})"
            )

    if alphas is None:
        alphas = []
        for t in range(t_count):
            res = solve_lasso(LassoProblem(atoms, deltas[t], hp.gamma / hp.nu))
            alphas.append(np.asarray(res.alpha))

    if config.alpha_init is not None:
        if len(config.alpha_init) != t_count:
            raise ValueError("alpha_init needs one vector per task")
        alphas = []
        for a in config.alpha_init:
            a = np.asarray(a, dtype=float)
            if a.shape != (k,) or np.any(a < 0):
                raise ValueError("alpha_init vectors must be nonnegative with one entry per atom")
            alphas.append(a)

    # Equilibrate (alpha, delta) before the first block: the raw init pair
    # (delta = w^2, one-pass alpha) sits far off the near-equality manifold
    # the block updates maintain, and starting from an inconsistent state
    # would show up as a one-off objective jump at the first coefficient
    # block.  These are the same alternations the main loop runs.
    if not config.freeze_alpha:
        for _ in range(max(config.inner_ad_sweeps, 3)):
            for t in range(t_count):
                result = solve_lasso(
                    LassoProblem(atoms, deltas[t], hp.gamma / hp.nu),
                    alpha_init=alphas[t],
                )
                alphas[t] = np.asarray(result.alpha)
                delta_new = update_delta(
                    CubicUpdateInputs(ws[t] ** 2, atoms @ alphas[t], hp.lambda2, hp.nu)
                )
                deltas[t] = np.maximum(delta_new, EPS_DELTA)
    else:
        for t in range(t_count):
            delta_new = update_delta(
                CubicUpdateInputs(ws[t] ** 2, atoms @ alphas[t], hp.lambda2, hp.nu)
            )
            deltas[t] = np.maximum(delta_new, EPS_DELTA)

    hinges = [_hinge_sum(ds, ws[t], bs[t]) for t, ds in enumerate(datasets)]
    return ws, bs, alphas, deltas, duals, hinges, atoms


def fit(datasets, config: TrainConfig, progress=None) -> TrainState:
    """Run alternating minimization to convergence or the iteration cap.

    progress, when given, receives one line-delimited JSON record per block
    with the iteration number, block name, objective value and wall time.
    """
    datasets = list(datasets)
    if not datasets:
        raise ValueError("need at least one task")
    m = datasets[0].n_features
    for ds in datasets:
        if ds.n_features != m:
            raise ValueError(
                f"task {ds.task_id}: feature dimension {ds.n_features} != {m}"
            )
        if not ds.has_both_classes():
            raise ValueError(f"task {ds.task_id}: training requires both label classes")

    hp = config.hp
    t_count = len(datasets)
    k = hp.dict_size if hp.dict_size is not None else min(2 * t_count, 400)
    started = time.perf_counter()

    ws, bs, alphas, deltas, duals, hinges, atoms = _initialize(datasets, config, k)
    trace: list[float] = []

    def current_state() -> TrainState:
        tasks = tuple(
            TaskParameters(
                w=ws[t], b=bs[t], alpha=alphas[t], delta=deltas[t], xi_sum=hinges[t]
            )
            for t in range(t_count)
        )
        return TrainState(DictionaryModel(atoms), tasks, tuple(trace))

    def record(iteration: int, block: str) -> float:
        state = current_state()
        obj = evaluate_objective(datasets, state, hp, config.variant)
        trace.append(obj)
        if progress is not None:
            gap = max(tp.reconstruction_gap(state.dictionary) for tp in state.tasks)
            progress.write(
                json.dumps(
                    {
                        "iteration": iteration,
                        "block": block,
                        "objective": obj,
                        "wall_time": time.perf_counter() - started,
                        "max_reconstruction_gap": gap,
                    }
                )
                + "\n"
            )
        return obj

    def w_block(it: int, stream: int = 1) -> None:
        for t, ds in enumerate(datasets):
            try:
                step = train_reweighted(
                    ds,
                    deltas[t],
                    hp.lambda1,
                    hp.lambda2,
                    tol_kkt=hp.tol_kkt,
                    max_epochs=hp.svm_max_epochs,
                    seed=[hp.seed, stream, t, it],
                    dual_init=duals[t],
                )
            except Exception as exc:
                raise TrainingError(f"task {ds.task_id}: w-step failed: {exc}") from exc
            ws[t] = np.asarray(step.w)
            bs[t] = step.b
            hinges[t] = step.hinge_sum
            duals[t] = step.svm.dual_coeffs

    def alpha_delta_block() -> None:
        nonlocal alphas, deltas
        dict_model = DictionaryModel(atoms)
        mean_reg = (
            config.variant == "mdsvm" and hp.lambda3 > 0 and t_count >= 2
        )
        # The design is shared by every solve in this block (B, or the
        # synthesized factor with constant B'B part), so its Gram is too.
        # The mean-regularized system is solved in its 1/nu scaling, same as
        # the plain subproblem: identical minimizer, far better conditioned
        # stationarity tolerances.
        root_nu = np.sqrt(hp.nu)
        if mean_reg:
            gram = (atoms.T @ atoms) + hp.lambda3 / hp.nu * (
                (t_count - 1.0) / t_count
            ) ** 2 * np.eye(atoms.shape[1])
        else:
            gram = atoms.T @ atoms
        for _ in range(config.inner_ad_sweeps):
            snapshot = list(alphas)
            for t, ds in enumerate(datasets):
                try:
                    if not config.freeze_alpha:
                        if mean_reg:
                            system = build_mean_reg_system(
                                dict_model,
                                deltas[t],
                                hp.nu,
                                hp.lambda3,
                                [snapshot[j] for j in range(t_count) if j != t],
                                t_count,
                            )
                            problem = LassoProblem(
                                system.design / root_nu,
                                system.target / root_nu,
                                hp.gamma / hp.nu,
                            )
                        else:
                            problem = LassoProblem(
                                atoms, deltas[t], hp.gamma / hp.nu
                            )
                        alphas[t] = np.asarray(
                            solve_lasso(
                                problem, alpha_init=alphas[t], gram=gram
                            ).alpha
                        )
                    recon = atoms @ alphas[t]
                    delta_new = update_delta(
                        CubicUpdateInputs(ws[t] ** 2, recon, hp.lambda2, hp.nu)
                    )
                    deltas[t] = np.maximum(delta_new, EPS_DELTA)
                except TrainingError:
                    raise
                except Exception as exc:
                    raise TrainingError(
                        f"task {ds.task_id}: coefficient step failed: {exc}"
                    ) from exc

    def dictionary_block() -> None:
        nonlocal atoms
        if not config.freeze_dictionary and config.dict_steps_per_iter > 0:
            atoms = update_dictionary(
                DictionaryModel(atoms),
                np.stack(deltas),
                np.stack(alphas),
                hp.step_size,
                config.dict_steps_per_iter,
            ).atoms

    # Unrecorded warmup iterations complete initialization: the first
    # covariance-weighted w-step moves far from the plain-SVM starting point,
    # and recording its large re-equilibration would make the trace start off
    # the steady descent path.
    for warm in range(config.warmup_iterations):
        w_block(warm, stream=2)
        alpha_delta_block()
        dictionary_block()

    prev_outer = None
    for it in range(1, hp.max_outer_iters + 1):
        w_block(it)
        record(it, "w")
        alpha_delta_block()
        record(it, "alpha_delta")
        dictionary_block()
        obj = record(it, "dictionary")
        if prev_outer is not None and abs(prev_outer - obj) <= hp.tol_objective * max(
            abs(prev_outer), 1e-12
        ):
            break
        prev_outer = obj

    return current_state()


def fit_one_vs_rest(features, labels, config: TrainConfig, progress=None) -> MulticlassModel:
    """Train one task per class (that class +1, rest -1), jointly sharing B."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("features must be 2-d with one label per row")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("one-vs-rest needs at least two distinct labels")
    datasets = [
        TaskDataset(
            task_id=str(c),
            features=x,
            labels=np.where(y == c, 1.0, -1.0),
        )
        for c in classes
    ]
    state = fit(datasets, config, progress)
    return MulticlassModel(class_labels=tuple(classes.tolist()), per_class=state)


def multiclass_scores(model: MulticlassModel, features) -> np.ndarray:
    """Score matrix with one column per class, aligned with class_labels."""
    return np.column_stack(
        [predict(tp.w, tp.b, features) for tp in model.per_class.tasks]
    )


def predict_one_vs_rest(model: MulticlassModel, features) -> np.ndarray:
    """argmax over class scores; exact ties go to the lowest class index."""
    scores = multiclass_scores(model, features)
    idx = np.argmax(scores, axis=1)
    return np.asarray(model.class_labels, dtype=object)[idx]


def fit_exemplar(
    positives,
    negatives,
    config: TrainConfig,
    task_ids=None,
    progress=None,
) -> TrainState:
    """Train one task per exemplar: its single positive plus the shared negatives.

    Grouping exemplars that should share a dictionary (e.g. per category) is
    the caller's responsibility via separate invocations.
    """
    negatives = np.asarray(negatives, dtype=float)
    if negatives.ndim != 2 or negatives.shape[0] == 0:
        raise ValueError("negatives must be a non-empty 2-d matrix")
    positives = list(positives)
    if not positives:
        raise ValueError("need at least one exemplar")
    if task_ids is None:
        task_ids = [f"exemplar_{i}" for i in range(len(positives))]
    if len(task_ids) != len(positives):
        raise ValueError("need one task_id per exemplar")
    n_neg = negatives.shape[0]
    datasets = []
    for tid, pos in zip(task_ids, positives):
        pos = np.asarray(pos, dtype=float)
        if pos.ndim == 2 and pos.shape[0] == 1:
            pos = pos[0]
        if pos.ndim != 1:
            raise ValueError(f"exemplar {tid}: exactly one positive sample expected")
        if pos.shape[0] != negatives.shape[1]:
            raise ValueError(
                f"exemplar {tid}: dimension {pos.shape[0]} != negatives {negatives.shape[1]}"
            )
        features = np.vstack([pos[None, :], negatives])
        labels = np.concatenate([[1.0], -np.ones(n_neg)])
        datasets.append(TaskDataset(task_id=str(tid), features=features, labels=labels))
    return fit(datasets, config, progress)
