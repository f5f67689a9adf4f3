"""Domain types and shared transforms for dictionary-covariance multi-task SVMs.

Every task t owns a linear classifier (w_t, b_t) whose parameter covariance is
the diagonal matrix Diag(delta_t), with delta_t = B @ alpha_t assembled from a
nonnegative dictionary B shared by all tasks and a sparse nonnegative
coefficient vector alpha_t.  This module holds the value types for that model
and the pure transforms (covariance assembly, feature reweighting, objective
evaluation) used by every solver.

All types are immutable after construction; operations are pure functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Positivity floor for covariance diagonals.  Diag(delta)^-1 appears in the
# objective, so delta entries may never reach zero.
EPS_DELTA = 1e-8

MODEL_FORMAT_VERSION = 1


def _locked(values, dtype=float, ndim=None, name="array") -> np.ndarray:
    """Copy to a read-only float array, enforcing dimensionality and finiteness."""
    arr = np.array(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TaskDataset:
    """One task's training data: dense features and binary labels in {-1, +1}."""

    task_id: str
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = _locked(self.features, ndim=2, name="features")
        labels = _locked(self.labels, ndim=1, name="labels")
        if feats.shape[0] < 1:
            raise ValueError("a task needs at least one sample")
        if labels.shape[0] != feats.shape[0]:
            raise ValueError(
                f"got {labels.shape[0]} labels for {feats.shape[0]} samples"
            )
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def has_both_classes(self) -> bool:
        return bool(np.any(self.labels > 0) and np.any(self.labels < 0))


@dataclass(frozen=True)
class DictionaryModel:
    """Nonnegative m x K dictionary whose columns are covariance atoms.

    Invariants: every entry >= 0 and every column's l1 norm <= 1 (small
    round-off slack allowed), so any nonnegative combination of columns is a
    valid covariance diagonal once floored at EPS_DELTA.
    """

    atoms: np.ndarray

    def __post_init__(self):
        atoms = _locked(self.atoms, ndim=2, name="atoms")
        if atoms.shape[1] < 1:
            raise ValueError("dictionary needs at least one atom")
        if np.any(atoms < 0):
            raise ValueError("dictionary entries must be nonnegative")
        col_l1 = np.abs(atoms).sum(axis=0)
        if np.any(col_l1 > 1.0 + 1e-12):
            worst = float(col_l1.max())
            raise ValueError(f"dictionary column l1 norm {worst} exceeds 1")
        object.__setattr__(self, "atoms", atoms)

    @property
    def n_features(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class TaskParameters:
    """Learned per-task parameters: classifier, atom coefficients, covariance."""

    w: np.ndarray
    b: float
    alpha: np.ndarray
    delta: np.ndarray
    xi_sum: float = 0.0

    def __post_init__(self):
        w = _locked(self.w, ndim=1, name="w")
        alpha = _locked(self.alpha, ndim=1, name="alpha")
        delta = _locked(self.delta, ndim=1, name="delta")
        if np.any(alpha < 0):
            raise ValueError("alpha entries must be nonnegative")
        if delta.shape != w.shape:
            raise ValueError("delta and w must have the same length")
        if np.any(delta < EPS_DELTA):
            raise ValueError(f"delta entries must be >= {EPS_DELTA}")
        if self.xi_sum < 0:
            raise ValueError("xi_sum must be nonnegative")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "xi_sum", float(self.xi_sum))

    def reconstruction_gap(self, dictionary: DictionaryModel) -> float:
        """max_i |delta_i - (B @ alpha)_i|: how loosely delta tracks B @ alpha."""
        return float(np.max(np.abs(self.delta - dictionary.atoms @ self.alpha)))


@dataclass(frozen=True)
class Hyperparameters:
    """Weights and solver controls shared by all training entry points.

    lambda1   weight on the total hinge loss
    lambda2   weight on the covariance-regularization term w' Diag(delta)^-1 w
    lambda3   weight pulling per-task alpha toward the task mean (0 = plain D-SVM)
    gamma     l1 weight on alpha (atom-selection sparsity)
    nu        penalty tying delta to B @ alpha (large = near-equality)
    dict_size number of atoms K; None means min(2 * n_tasks, 400) at fit time
    step_size initial dictionary gradient step (backtracking halves from here)
    """

    lambda1: float = 1.0
    lambda2: float = 10.0
    lambda3: float = 0.0
    gamma: float = 0.1
    nu: float = 1e3
    dict_size: int | None = None
    step_size: float = 1.0
    max_outer_iters: int = 50
    tol_objective: float = 1e-5
    tol_kkt: float = 1e-6
    svm_max_epochs: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.lambda1 <= 0:
            raise ValueError("lambda1 must be > 0")
        if self.lambda2 <= 0:
            raise ValueError("lambda2 must be > 0")
        if self.lambda3 < 0:
            raise ValueError("lambda3 must be >= 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.nu <= 0:
            raise ValueError("nu must be > 0")
        if self.dict_size is not None and self.dict_size < 1:
            raise ValueError("dict_size must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.tol_objective <= 0 or self.tol_kkt <= 0:
            raise ValueError("tolerances must be > 0")
        if self.svm_max_epochs < 1:
            raise ValueError("svm_max_epochs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "gamma": self.gamma,
            "nu": self.nu,
            "dict_size": self.dict_size,
            "step_size": self.step_size,
            "max_outer_iters": self.max_outer_iters,
            "tol_objective": self.tol_objective,
            "tol_kkt": self.tol_kkt,
            "svm_max_epochs": self.svm_max_epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparameters":
        return cls(**data)


@dataclass(frozen=True)
class TrainState:
    """Full training result: shared dictionary, per-task parameters, objective trace."""

    dictionary: DictionaryModel
    tasks: tuple[TaskParameters, ...]
    objective_trace: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(
            self, "objective_trace", tuple(float(v) for v in self.objective_trace)
        )
        for tp in self.tasks:
            if tp.alpha.shape[0] != self.dictionary.n_atoms:
                raise ValueError("task alpha length must match dictionary atom count")
            if tp.w.shape[0] != self.dictionary.n_features:
                raise ValueError("task w length must match dictionary feature count")


def assemble_covariance(dictionary: DictionaryModel, alpha) -> np.ndarray:
    """Covariance diagonal for one task: max(B @ alpha, EPS_DELTA) elementwise.

    The floor keeps Diag(delta)^-1 well defined when the sparse combination
    leaves coordinates at zero.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (dictionary.n_atoms,):
        raise ValueError(
            f"alpha has shape {alpha.shape}, expected ({dictionary.n_atoms},)"
        )
    if np.any(alpha < 0):
        raise ValueError("alpha entries must be nonnegative")
    return np.maximum(dictionary.atoms @ alpha, EPS_DELTA)


def reweight_features(features, delta, lambda2: float) -> np.ndarray:
    """Scale feature column j by sqrt(delta_j / lambda2).

    Training a standard SVM on the rescaled features is equivalent to training
    with the covariance-weighted regularizer lambda2 * w' Diag(delta)^-1 w on
    the originals.
    """
    features = np.asarray(features, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if features.ndim != 2 or features.shape[1] != delta.shape[0]:
        raise ValueError(
            f"features shape {features.shape} incompatible with delta length {delta.shape[0]}"
        )
    if lambda2 <= 0:
        raise ValueError("lambda2 must be > 0")
    if np.any(delta <= 0):
        raise ValueError("delta entries must be strictly positive")
    return features * np.sqrt(delta / lambda2)


def recover_weights(w_tilde, delta, lambda2: float) -> np.ndarray:
    """Map a weight vector learned on reweighted features back to the original space.

    w_j = w_tilde_j * sqrt(delta_j / lambda2), so w @ x == w_tilde @ x_tilde
    for every sample x: predictions are unchanged by the round trip.
    """
    w_tilde = np.asarray(w_tilde, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if w_tilde.shape != delta.shape:
        raise ValueError("w_tilde and delta must have the same length")
    if lambda2 <= 0:
        raise ValueError("lambda2 must be > 0")
    if np.any(delta <= 0):
        raise ValueError("delta entries must be strictly positive")
    return w_tilde * np.sqrt(delta / lambda2)


def evaluate_objective(
    datasets: Sequence[TaskDataset],
    state: TrainState,
    hp: Hyperparameters,
    variant: str = "dsvm",
) -> float:
    """Training objective over all tasks under the current state.

    Per task: lambda1 * sum hinge + lambda2 * sum_j w_j^2 / delta_j
    + gamma * ||alpha||_1.  The mdsvm variant adds
    lambda3 * sum_t ||alpha_t - mean(alpha)||^2.  Hinge slacks are recomputed
    from the current (w, b), never read from caches.
    """
    if variant not in ("dsvm", "mdsvm"):
        raise ValueError(f"unknown variant {variant!r}")
    if len(datasets) != len(state.tasks):
        raise ValueError(
            f"{len(datasets)} datasets for {len(state.tasks)} task parameter sets"
        )
    total = 0.0
    for ds, tp in zip(datasets, state.tasks):
        if ds.n_features != tp.w.shape[0]:
            raise ValueError(
                f"task {ds.task_id}: {ds.n_features} features vs w length {tp.w.shape[0]}"
            )
        margins = ds.labels * (ds.features @ tp.w + tp.b)
        hinge = float(np.maximum(0.0, 1.0 - margins).sum())
        total += hp.lambda1 * hinge
        total += hp.lambda2 * float(np.sum(tp.w**2 / tp.delta))
        total += hp.gamma * float(np.sum(tp.alpha))
    if variant == "mdsvm" and hp.lambda3 > 0 and len(state.tasks) > 1:
        coeffs = np.stack([tp.alpha for tp in state.tasks])
        mean = coeffs.mean(axis=0)
        total += hp.lambda3 * float(np.sum((coeffs - mean) ** 2))
    return total


def state_to_json(state: TrainState, hp: Hyperparameters, task_ids: Sequence[str]) -> str:
    """Serialize a trained model to the versioned JSON document.

    Floats go through json's repr path, which round-trips IEEE doubles
    exactly.  The objective trace and cached slack totals are derived
    quantities and intentionally not part of the document.
    """
    if len(task_ids) != len(state.tasks):
        raise ValueError("need one task_id per task")
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "hyperparameters": hp.to_dict(),
        "dictionary": [list(row) for row in state.dictionary.atoms],
        "tasks": [
            {
                "task_id": str(tid),
                "w": list(tp.w),
                "b": tp.b,
                "alpha": list(tp.alpha),
                "delta": list(tp.delta),
            }
            for tid, tp in zip(task_ids, state.tasks)
        ],
    }
    return json.dumps(doc, indent=2)


def state_from_json(text: str) -> tuple[TrainState, Hyperparameters, list[str]]:
    """Inverse of state_to_json: (state, hyperparameters, task_ids)."""
    doc = json.loads(text)
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    hp = Hyperparameters.from_dict(doc["hyperparameters"])
    dictionary = DictionaryModel(np.array(doc["dictionary"], dtype=float))
    tasks = []
    task_ids = []
    for entry in doc["tasks"]:
        task_ids.append(entry["task_id"])
        tasks.append(
            TaskParameters(
                w=np.array(entry["w"], dtype=float),
                b=float(entry["b"]),
                alpha=np.array(entry["alpha"], dtype=float),
                delta=np.array(entry["delta"], dtype=float),
            )
        )
    return TrainState(dictionary, tuple(tasks)), hp, task_ids


def save_model(path, state: TrainState, hp: Hyperparameters, task_ids: Sequence[str]) -> None:
    text = state_to_json(state, hp, task_ids)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(text)


def load_model(path) -> tuple[TrainState, Hyperparameters, list[str]]:
    with open(path, "r", encoding="ascii") as fh:
        return state_from_json(fh.read())
