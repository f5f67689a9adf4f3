import numpy as np
import pytest

from dsvm.model_core import TaskDataset
from dsvm.svm_solver import (
    predict,
    predict_labels,
    train_linear_svm,
    train_reweighted,
)
from oracles import svm_dual_qp_oracle


def test_analytic_max_margin_1d():
    x = np.array([[-1.0], [1.0]])
    y = np.array([-1.0, 1.0])
    sol = train_linear_svm(x, y, 100.0)
    assert sol.converged
    assert sol.w == pytest.approx([1.0], abs=1e-4)
    assert sol.b == pytest.approx(0.0, abs=1e-4)


def test_conflicting_duplicates_do_not_diverge():
    x = np.array([[0.5, -0.2], [0.5, -0.2]])
    y = np.array([1.0, -1.0])
    sol = train_linear_svm(x, y, 1.0)
    assert np.all(np.isfinite(sol.w))
    margins = y * (x @ sol.w + sol.b)
    slack = np.maximum(0.0, 1.0 - margins)
    assert np.all(slack > 0)


def test_validation_errors():
    x = np.ones((3, 2))
    with pytest.raises(ValueError):
        train_linear_svm(x, np.array([1.0, 1.0, 1.0]), 1.0)
    with pytest.raises(ValueError):
        train_linear_svm(x, np.array([1.0, -1.0, 1.0]), 0.0)
    with pytest.raises(ValueError):
        train_linear_svm(x[:1], np.array([1.0]), 1.0)


def _random_problem(rng):
    n = int(rng.integers(3, 9))
    m = int(rng.integers(1, 4))
    x = rng.normal(size=(n, m))
    y = np.where(rng.random(n) > 0.5, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    cost = float(rng.choice([0.1, 1.0, 10.0]))
    return x, y, cost


def test_matches_qp_oracle_on_random_problems():
    rng = np.random.default_rng(7)
    for trial in range(20):
        x, y, cost = _random_problem(rng)
        sol = train_linear_svm(x, y, cost, tol_kkt=1e-9, max_epochs=500_000)
        _, dual_opt, primal_opt = svm_dual_qp_oracle(x, y, cost)
        assert sol.primal_objective == pytest.approx(primal_opt, abs=1e-6), trial
        assert sol.dual_objective == pytest.approx(dual_opt, abs=1e-6), trial


def test_dual_feasibility_and_gap():
    rng = np.random.default_rng(13)
    for _ in range(10):
        x, y, cost = _random_problem(rng)
        sol = train_linear_svm(x, y, cost, tol_kkt=1e-9, max_epochs=500_000)
        assert np.all(sol.dual_coeffs >= 0.0)
        assert np.all(sol.dual_coeffs <= cost)
        assert sol.duality_gap >= -1e-9
        assert sol.duality_gap <= 1e-6


def test_iteration_cap_reported():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(30, 3))
    y = np.where(rng.random(30) > 0.5, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    sol = train_linear_svm(x, y, 10.0, max_epochs=1)
    assert sol.n_epochs == 1
    assert not sol.converged


def test_permutation_invariant_objective():
    rng = np.random.default_rng(17)
    x = rng.normal(size=(25, 3))
    y = np.where(rng.random(25) > 0.5, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    sol = train_linear_svm(x, y, 1.0, tol_kkt=1e-10, max_epochs=500_000)
    perm = rng.permutation(25)
    sol_p = train_linear_svm(x[perm], y[perm], 1.0, tol_kkt=1e-10, seed=5, max_epochs=500_000)
    assert abs(sol.primal_objective - sol_p.primal_objective) < 1e-8


def test_warm_start_agrees_with_cold_start():
    rng = np.random.default_rng(23)
    x = rng.normal(size=(20, 2))
    y = np.where(x[:, 0] + 0.3 * rng.normal(size=20) > 0, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    cold = train_linear_svm(x, y, 1.0, tol_kkt=1e-10, max_epochs=500_000)
    warm = train_linear_svm(x, y, 1.0, tol_kkt=1e-10, dual_init=cold.dual_coeffs, max_epochs=500_000)
    assert warm.n_epochs <= cold.n_epochs
    assert warm.primal_objective == pytest.approx(cold.primal_objective, abs=1e-9)


def _task(rng, n=20, m=2):
    x = rng.normal(size=(n, m))
    y = np.where(x[:, 0] > 0, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    return TaskDataset("t", x, y)


def test_reweighted_identity_transform():
    rng = np.random.default_rng(31)
    ds = _task(rng)
    lambda1, lambda2 = 2.0, 3.0
    fit = train_reweighted(ds, np.full(2, lambda2), lambda1, lambda2, tol_kkt=1e-10, max_epochs=500_000)
    plain = train_linear_svm(ds.features, ds.labels, lambda1 / 2.0, tol_kkt=1e-10, max_epochs=500_000)
    assert fit.w == pytest.approx(plain.w, abs=1e-8)
    assert fit.b == pytest.approx(plain.b, abs=1e-8)


def test_reweighted_two_path_equivalence():
    # Solving the transformed problem directly and mapping back must give the
    # same predictions as train_reweighted.
    rng = np.random.default_rng(37)
    for _ in range(20):
        ds = _task(rng)
        delta = rng.random(2) * 4 + 0.25
        lambda2 = float(rng.random() * 5 + 0.2)
        lambda1 = 2.0
        fit = train_reweighted(ds, delta, lambda1, lambda2, tol_kkt=1e-10, max_epochs=500_000)
        scale = np.sqrt(delta / lambda2)
        direct = train_linear_svm(ds.features * scale, ds.labels, lambda1 / 2.0, tol_kkt=1e-10, max_epochs=500_000)
        test_x = rng.normal(size=(10, 2))
        ours = predict(fit.w, fit.b, test_x)
        direct_scores = predict(direct.w, direct.b, test_x * scale)
        assert np.allclose(ours, direct_scores, atol=1e-7)


def test_reweighted_joint_scaling_invariance():
    rng = np.random.default_rng(41)
    ds = _task(rng)
    delta = rng.random(2) + 0.5
    fit_a = train_reweighted(ds, delta, 2.0, 1.0, tol_kkt=1e-10, max_epochs=500_000)
    fit_b = train_reweighted(ds, delta * 10.0, 2.0, 10.0, tol_kkt=1e-10, max_epochs=500_000)
    assert fit_a.w == pytest.approx(fit_b.w, abs=1e-8)
    assert fit_a.b == pytest.approx(fit_b.b, abs=1e-8)


def test_reweighted_hinge_on_original_features():
    rng = np.random.default_rng(43)
    ds = _task(rng)
    fit = train_reweighted(ds, np.array([0.5, 2.0]), 2.0, 1.0)
    margins = ds.labels * (ds.features @ fit.w + fit.b)
    assert fit.hinge_sum == pytest.approx(np.maximum(0.0, 1.0 - margins).sum())


def test_predict_examples():
    scores = predict(np.zeros(2), 0.0, np.ones((3, 2)))
    assert np.all(scores == 0.0)
    assert np.all(predict_labels(scores) == 1)
    assert predict(np.array([1.0, -1.0]), 0.5, np.array([[2.0, 1.0]]))[0] == pytest.approx(1.5)
    with pytest.raises(ValueError):
        predict(np.ones(3), 0.0, np.ones((2, 2)))


def test_predict_invariant_under_reweight_round_trip():
    rng = np.random.default_rng(47)
    ds = _task(rng)
    delta = rng.random(2) + 0.3
    fit = train_reweighted(ds, delta, 2.0, 1.5, tol_kkt=1e-10, max_epochs=500_000)
    x = rng.normal(size=(15, 2))
    from dsvm.model_core import recover_weights

    w_tilde = fit.w / np.sqrt(delta / 1.5)
    again = recover_weights(w_tilde, delta, 1.5)
    assert np.allclose(predict(fit.w, fit.b, x), predict(again, fit.b, x), atol=1e-12)
