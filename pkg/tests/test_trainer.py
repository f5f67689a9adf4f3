import io
import json

import numpy as np
import pytest

from dsvm.model_core import Hyperparameters, TaskDataset, state_to_json
from dsvm.svm_solver import predict, train_linear_svm
from dsvm.trainer import (
    MulticlassModel,
    TrainConfig,
    TrainingError,
    fit,
    fit_exemplar,
    fit_one_vs_rest,
    multiclass_scores,
    predict_one_vs_rest,
)
from synth import clustered_exemplars, shared_covariance_tasks


def _datasets(seed=0, n_tasks=4, n_features=8, n_samples=16):
    tasks, _ = shared_covariance_tasks(
        n_tasks=n_tasks, n_features=n_features, n_samples=n_samples, seed=seed
    )
    return [TaskDataset(str(i), x, y) for i, (x, y) in enumerate(tasks)]


def _hp(**kw):
    base = dict(
        lambda1=1.0,
        lambda2=1.0,
        gamma=0.1,
        nu=1e3,
        max_outer_iters=4,
        tol_kkt=1e-4,
        svm_max_epochs=4000,
        seed=7,
    )
    base.update(kw)
    return Hyperparameters(**base)


def test_reduction_to_plain_svm_with_frozen_dictionary():
    # One task, a single uniform atom with alpha frozen so that
    # B @ alpha == 1 exactly, dictionary and coefficients frozen, and nu
    # huge so the covariance diagonal stays pinned at 1: the trained
    # classifier must match a plain SVM on features scaled by 1/sqrt(lambda2).
    rng = np.random.default_rng(3)
    x = rng.normal(size=(30, 6))
    w_true = rng.normal(size=6)
    y = np.where(x @ w_true > 0, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    ds = TaskDataset("only", x, y)
    lambda1, lambda2 = 2.0, 4.0
    m = x.shape[1]
    hp = _hp(
        lambda1=lambda1,
        lambda2=lambda2,
        nu=1e12,
        dict_size=1,
        max_outer_iters=3,
        tol_kkt=1e-9,
        svm_max_epochs=400_000,
    )
    config = TrainConfig(
        hp=hp,
        freeze_dictionary=True,
        freeze_alpha=True,
        dictionary_init=np.full((m, 1), 1.0 / m),
        alpha_init=(np.array([float(m)]),),
    )
    state = fit([ds], config)
    plain = train_linear_svm(
        x / np.sqrt(lambda2), y, lambda1 / 2.0, tol_kkt=1e-9, max_epochs=400_000
    )
    # Plain weights live in the scaled space; map scores back for comparison.
    test_x = rng.normal(size=(40, 6))
    ours = predict(state.tasks[0].w, state.tasks[0].b, test_x)
    reference = predict(plain.w, plain.b, test_x / np.sqrt(lambda2))
    assert np.allclose(ours, reference, atol=1e-6)
    assert np.allclose(state.tasks[0].w, plain.w / np.sqrt(lambda2), atol=1e-6)


def test_objective_trace_non_increasing():
    datasets = _datasets(seed=2)
    for variant in ("dsvm", "mdsvm"):
        for init in ("independent_svm", "zeros"):
            hp = _hp(lambda3=1.0 if variant == "mdsvm" else 0.0)
            state = fit(
                datasets,
                TrainConfig(hp=hp, variant=variant, init_strategy=init),
            )
            trace = np.array(state.objective_trace)
            assert len(trace) >= 3
            drops = (trace[1:] - trace[:-1]) / np.maximum(np.abs(trace[:-1]), 1e-12)
            assert np.max(drops) <= 1e-8, (variant, init)


def test_mdsvm_with_zero_lambda3_matches_dsvm():
    datasets = _datasets(seed=5)
    hp = _hp(lambda3=0.0)
    state_a = fit(datasets, TrainConfig(hp=hp, variant="dsvm"))
    state_b = fit(datasets, TrainConfig(hp=hp, variant="mdsvm"))
    for ta, tb in zip(state_a.tasks, state_b.tasks):
        assert np.allclose(ta.w, tb.w, atol=1e-10)
        assert np.allclose(ta.alpha, tb.alpha, atol=1e-10)
        assert np.allclose(ta.delta, tb.delta, atol=1e-10)
    assert np.allclose(
        state_a.dictionary.atoms, state_b.dictionary.atoms, atol=1e-10
    )


def test_fit_rejects_inconsistent_tasks():
    datasets = _datasets()
    bad = TaskDataset("bad", np.ones((4, 3)), np.array([1.0, -1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        fit(datasets + [bad], TrainConfig(hp=_hp()))
    single_class = TaskDataset("sc", np.ones((3, 8)), np.array([1.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        fit([single_class], TrainConfig(hp=_hp()))


def test_progress_records_are_json_lines():
    datasets = _datasets(seed=1, n_tasks=2)
    sink = io.StringIO()
    fit(datasets, TrainConfig(hp=_hp(max_outer_iters=2)), progress=sink)
    lines = sink.getvalue().strip().splitlines()
    assert len(lines) == 3 * 2  # three blocks per outer iteration
    for line in lines:
        record = json.loads(line)
        assert set(record) >= {"iteration", "block", "objective", "wall_time"}
    blocks = [json.loads(line)["block"] for line in lines[:3]]
    assert blocks == ["w", "alpha_delta", "dictionary"]


def _blobs(rng, n_per_class=25, offset=6.0):
    centers = np.array([[0.0, 0.0], [offset, 0.0], [0.0, offset]])
    features = np.vstack(
        [center + rng.normal(size=(n_per_class, 2)) for center in centers]
    )
    labels = np.repeat([0, 1, 2], n_per_class)
    return features, labels


def test_one_vs_rest_separable_blobs():
    rng = np.random.default_rng(11)
    features, labels = _blobs(rng)
    model = fit_one_vs_rest(features, labels, TrainConfig(hp=_hp()))
    assert model.class_labels == (0, 1, 2)
    predicted = predict_one_vs_rest(model, features)
    accuracy = np.mean(predicted.astype(int) == labels)
    assert accuracy >= 0.99


def test_one_vs_rest_two_class_agrees_with_binary():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(40, 3))
    y = np.where(x[:, 0] > 0, 1, -1)
    y[0], y[1] = 1, -1
    model = fit_one_vs_rest(x, y, TrainConfig(hp=_hp()))
    scores = multiclass_scores(model, x)
    not_tied = scores[:, 0] != scores[:, 1]
    predicted = predict_one_vs_rest(model, x)[not_tied].astype(int)
    # The positive-class column is a binary model; argmax must agree with its
    # sign wherever the two one-vs-rest scores differ.
    binary_sign = np.where(scores[not_tied, 1] > scores[not_tied, 0], 1, -1)
    assert np.array_equal(predicted, binary_sign)


def test_one_vs_rest_tie_breaks_to_lowest_class():
    model = fit_one_vs_rest(
        np.array([[1.0], [-1.0], [2.0], [-2.0]]),
        np.array([3, 5, 3, 5]),
        TrainConfig(hp=_hp(max_outer_iters=1)),
    )
    scores = multiclass_scores(model, np.zeros((1, 1)))
    if scores[0, 0] == scores[0, 1]:
        assert predict_one_vs_rest(model, np.zeros((1, 1)))[0] == 3
    tied = np.zeros((2, len(model.class_labels)))
    idx = np.argmax(tied, axis=1)
    assert np.all(idx == 0)


def test_one_vs_rest_validation():
    with pytest.raises(ValueError):
        fit_one_vs_rest(np.ones((3, 2)), np.array([1, 1, 1]), TrainConfig(hp=_hp()))


def test_exemplar_single_task_matches_fit():
    rng = np.random.default_rng(17)
    pos = rng.normal(size=4) + 2.0
    negatives = rng.normal(size=(12, 4))
    config = TrainConfig(hp=_hp(max_outer_iters=2))
    state_a = fit_exemplar([pos], negatives, config, task_ids=["e0"])
    features = np.vstack([pos[None, :], negatives])
    labels = np.concatenate([[1.0], -np.ones(12)])
    state_b = fit([TaskDataset("e0", features, labels)], config)
    assert np.allclose(state_a.tasks[0].w, state_b.tasks[0].w, atol=1e-12)
    assert state_a.tasks[0].b == state_b.tasks[0].b


def test_exemplar_joint_ranking_at_least_independent():
    exemplars, negatives, test_pos, test_neg = clustered_exemplars(seed=23)
    config = TrainConfig(hp=_hp(lambda2=2.0, max_outer_iters=3))
    joint = fit_exemplar(list(exemplars), negatives, config)

    def mean_auc(states_w_b):
        aucs = []
        for w, b in states_w_b:
            pos_scores = predict(w, b, test_pos)
            neg_scores = predict(w, b, test_neg)
            diff = pos_scores[:, None] > neg_scores[None, :]
            ties = pos_scores[:, None] == neg_scores[None, :]
            aucs.append(float((diff + 0.5 * ties).mean()))
        return float(np.mean(aucs))

    joint_auc = mean_auc([(tp.w, tp.b) for tp in joint.tasks])
    independent = []
    for i, pos in enumerate(exemplars):
        features = np.vstack([pos[None, :], negatives])
        labels = np.concatenate([[1.0], -np.ones(negatives.shape[0])])
        sol = train_linear_svm(
            features, labels, config.hp.lambda1 / 2.0, tol_kkt=1e-4, max_epochs=4000
        )
        independent.append((sol.w, sol.b))
    indep_auc = mean_auc(independent)
    assert joint_auc >= indep_auc


def test_exemplar_extreme_imbalance_converges():
    rng = np.random.default_rng(29)
    pos = rng.normal(size=5) + 3.0
    negatives = rng.normal(size=(1000, 5))
    state = fit_exemplar(
        [pos], negatives, TrainConfig(hp=_hp(max_outer_iters=1, svm_max_epochs=2000))
    )
    assert np.isfinite(state.tasks[0].xi_sum)
    assert state.tasks[0].xi_sum >= 0


def test_exemplar_validation():
    with pytest.raises(ValueError):
        fit_exemplar([], np.ones((3, 2)), TrainConfig(hp=_hp()))
    with pytest.raises(ValueError):
        fit_exemplar([np.ones(2)], np.empty((0, 2)), TrainConfig(hp=_hp()))
    with pytest.raises(ValueError):
        fit_exemplar([np.ones((2, 2))], np.ones((3, 2)), TrainConfig(hp=_hp()))


def test_deterministic_serialized_models():
    datasets = _datasets(seed=31, n_tasks=3)
    config = TrainConfig(hp=_hp(max_outer_iters=3))
    ids = [ds.task_id for ds in datasets]
    first = state_to_json(fit(datasets, config), config.hp, ids)
    second = state_to_json(fit(datasets, config), config.hp, ids)
    assert first == second


def test_multiclass_model_validation():
    datasets = _datasets(seed=1, n_tasks=2)
    state = fit(datasets, TrainConfig(hp=_hp(max_outer_iters=1)))
    with pytest.raises(ValueError):
        MulticlassModel(class_labels=(1,), per_class=state)
    with pytest.raises(ValueError):
        MulticlassModel(class_labels=(1, 2, 3), per_class=state)


def test_training_error_names_task():
    # Force a failure inside the w-step by injecting NaN through a dataset
    # built from a valid one (bypassing validation via direct construction).
    ds = TaskDataset("okay", np.ones((4, 2)) * [[1], [2], [3], [4]], np.array([1.0, -1.0, 1.0, -1.0]))
    object.__setattr__(ds, "features", np.full((4, 2), np.nan))
    with pytest.raises(TrainingError, match="okay"):
        fit([ds], TrainConfig(hp=_hp(max_outer_iters=1)))
