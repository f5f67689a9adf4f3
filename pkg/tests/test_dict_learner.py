import numpy as np
import pytest

from dsvm.dict_learner import (
    CubicUpdateInputs,
    project_capped_simplex,
    reconstruction_loss,
    update_delta,
    update_dictionary,
)
from dsvm.model_core import EPS_DELTA, DictionaryModel
from oracles import capped_simplex_oracle, cubic_delta_oracle


def test_delta_zero_weight_tracks_reconstruction():
    inputs = CubicUpdateInputs(np.array([0.0]), np.array([0.7]), 2.0, 1.0)
    assert update_delta(inputs)[0] == pytest.approx(0.7)


def test_delta_zero_weight_zero_reconstruction_floors():
    inputs = CubicUpdateInputs(np.array([0.0]), np.array([0.0]), 2.0, 1.0)
    assert update_delta(inputs)[0] == EPS_DELTA


def test_delta_hand_solved_cubic():
    # 2 d^3 = 2  ->  d = 1 with lambda2=2, nu=1, w^2=1, c=0.
    inputs = CubicUpdateInputs(np.array([1.0]), np.array([0.0]), 2.0, 1.0)
    assert update_delta(inputs)[0] == pytest.approx(1.0, abs=1e-12)


def test_delta_matches_grid_bisection_oracle():
    rng = np.random.default_rng(3)
    w_sq = rng.random(200) * 4
    c = rng.random(200) * 3
    lambda2 = 1.7
    nu = 2.3
    roots = update_delta(CubicUpdateInputs(w_sq, c, lambda2, nu))
    assert np.all(roots > 0)
    for i in range(200):
        expected = cubic_delta_oracle(w_sq[i], c[i], lambda2, nu)
        assert roots[i] == pytest.approx(expected, abs=1e-6)


def test_delta_root_uniqueness_sign_pattern():
    # f is negative at 0 and just below the root, positive just above it.
    rng = np.random.default_rng(5)
    for _ in range(50):
        w_sq = float(rng.random() * 3 + 0.01)
        c = float(rng.random() * 2)
        nu = float(rng.random() * 4 + 0.1)
        lambda2 = float(rng.random() * 4 + 0.1)
        root = update_delta(
            CubicUpdateInputs(np.array([w_sq]), np.array([c]), lambda2, nu)
        )[0]

        def f(d):
            return 2 * nu * d**3 - 2 * nu * c * d**2 - lambda2 * w_sq

        assert f(0.0) < 0
        assert f(root * (1 - 1e-6)) < 0 < f(root * (1 + 1e-6))


def test_delta_validation():
    with pytest.raises(ValueError):
        CubicUpdateInputs(np.array([-1.0]), np.array([0.0]), 1.0, 1.0)
    with pytest.raises(ValueError):
        CubicUpdateInputs(np.array([1.0]), np.array([0.0]), 0.0, 1.0)


def test_projection_already_feasible():
    v = np.array([0.2, 0.3])
    assert np.array_equal(project_capped_simplex(v), v)


def test_projection_uniform_threshold():
    out = project_capped_simplex(np.array([0.5, 0.5, 0.5]))
    assert np.allclose(out, [1 / 3, 1 / 3, 1 / 3])


def test_projection_mixed_signs():
    out = project_capped_simplex(np.array([-1.0, 2.0]))
    assert np.allclose(out, [0.0, 1.0])
    oracle = capped_simplex_oracle(np.array([-1.0, 2.0]))
    assert np.allclose(out, oracle, atol=1e-10)


def test_projection_matches_bisection_oracle():
    rng = np.random.default_rng(7)
    for _ in range(100):
        v = rng.normal(0.0, 1.0, size=10) * rng.choice([0.2, 1.0, 5.0])
        ours = project_capped_simplex(v)
        expected = capped_simplex_oracle(v)
        assert np.max(np.abs(ours - expected)) <= 1e-6
        assert np.all(ours >= 0)
        assert ours.sum() <= 1 + 1e-12


def test_projection_idempotent():
    rng = np.random.default_rng(9)
    for _ in range(30):
        v = rng.normal(size=6) * 3
        once = project_capped_simplex(v)
        twice = project_capped_simplex(once)
        assert np.array_equal(once, twice)


def test_projection_contraction():
    rng = np.random.default_rng(11)
    for _ in range(50):
        v = rng.normal(size=5) * 2
        u = rng.random(5)
        u = u / u.sum() * rng.random()  # feasible point
        proj = project_capped_simplex(v)
        assert np.linalg.norm(proj - u) <= np.linalg.norm(v - u) + 1e-12


def test_projection_rejects_non_finite():
    with pytest.raises(ValueError):
        project_capped_simplex(np.array([1.0, np.inf]))


def _dictionary(atoms):
    return DictionaryModel(np.asarray(atoms, dtype=float))


def test_dictionary_stationary_point_unchanged():
    atoms = np.array([[0.3, 0.1], [0.2, 0.4]])
    d = _dictionary(atoms)
    alphas = np.array([[1.0, 0.5], [0.2, 2.0]])
    deltas = alphas @ atoms.T  # exact reconstruction: gradient is zero
    out = update_dictionary(d, deltas, alphas, step_size=1.0, n_steps=10)
    assert np.array_equal(out.atoms, atoms)


def test_dictionary_one_dimensional_convergence():
    d = _dictionary([[0.2]])
    out = update_dictionary(
        d, np.array([[0.9]]), np.array([[1.0]]), step_size=10.0, n_steps=50
    )
    assert out.atoms[0, 0] == pytest.approx(0.9, abs=1e-8)


def test_dictionary_monotone_descent():
    rng = np.random.default_rng(13)
    atoms = rng.random((6, 3))
    atoms /= atoms.sum(axis=0) * 1.5
    d = _dictionary(atoms)
    alphas = rng.random((4, 3)) * 2
    deltas = rng.random((4, 6))
    before = reconstruction_loss(d.atoms, deltas, alphas)
    losses = [before]
    current = d
    for _ in range(10):
        current = update_dictionary(current, deltas, alphas, step_size=1.0, n_steps=1)
        losses.append(reconstruction_loss(current.atoms, deltas, alphas))
    for prev, new in zip(losses, losses[1:]):
        assert new <= prev + 1e-12
    grad = -2.0 * (deltas - alphas @ current.atoms.T).T @ alphas
    if np.linalg.norm(grad) >= 1e-10:
        # Still strictly descending wherever the gradient has not vanished.
        assert losses[-1] < losses[0]


def test_dictionary_respects_constraints_under_huge_steps():
    rng = np.random.default_rng(17)
    atoms = rng.random((5, 2)) * 0.15
    d = _dictionary(atoms)
    alphas = rng.random((3, 2))
    deltas = rng.random((3, 5)) * 4
    out = update_dictionary(d, deltas, alphas, step_size=1e6, n_steps=5)
    assert np.all(out.atoms >= 0)
    assert np.all(out.atoms.sum(axis=0) <= 1 + 1e-12)
    assert reconstruction_loss(out.atoms, deltas, alphas) <= reconstruction_loss(
        d.atoms, deltas, alphas
    ) + 1e-12


def test_dictionary_dimension_validation():
    d = _dictionary(np.full((3, 2), 0.1))
    with pytest.raises(ValueError):
        update_dictionary(d, np.ones((2, 4)), np.ones((2, 2)), 1.0, 1)
    with pytest.raises(ValueError):
        update_dictionary(d, np.ones((2, 3)), np.ones((3, 2)), 1.0, 1)
