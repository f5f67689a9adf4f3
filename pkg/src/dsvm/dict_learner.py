"""Covariance-diagonal closed-form update, capped-simplex projection, and
projected gradient descent on the shared dictionary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model_core import EPS_DELTA, DictionaryModel

CUBIC_REL_TOL = 1e-10


@dataclass(frozen=True)
class CubicUpdateInputs:
    """Per-task data for the covariance-diagonal update.

    w_sq is the elementwise square of the task weight vector; reconstruction
    is B @ alpha for the task.
    """

    w_sq: np.ndarray
    reconstruction: np.ndarray
    lambda2: float
    nu: float

    def __post_init__(self):
        w_sq = np.asarray(self.w_sq, dtype=float)
        recon = np.asarray(self.reconstruction, dtype=float)
        if w_sq.ndim != 1 or recon.shape != w_sq.shape:
            raise ValueError("w_sq and reconstruction must be 1-d vectors of equal length")
        if np.any(w_sq < 0):
            raise ValueError("w_sq entries must be nonnegative")
        if self.lambda2 <= 0 or self.nu <= 0:
            raise ValueError("lambda2 and nu must be > 0")
        object.__setattr__(self, "w_sq", w_sq)
        object.__setattr__(self, "reconstruction", recon)


def update_delta(inputs: CubicUpdateInputs) -> np.ndarray:
    """Exact minimizer of lambda2 * w^2 / d + nu * (d - c)^2 per coordinate.

    Stationarity gives 2 nu d^3 - 2 nu c d^2 - lambda2 w^2 = 0, which has
    exactly one positive root when w^2 > 0 (the cubic is negative at 0 and
    increasing past its last critical point).  Newton from
    max(c, (lambda2 w^2 / 2 nu)^(1/3)) approaches the root from the left where
    the cubic is convex and increasing; coordinates it fails on fall back to
    bisection.  Coordinates with w^2 == 0 return max(c, EPS_DELTA).
    """
    w_sq = inputs.w_sq
    c = inputs.reconstruction
    lam2 = inputs.lambda2
    nu = inputs.nu

    zero = w_sq == 0.0
    rhs = lam2 * w_sq
    base = np.cbrt(rhs / (2.0 * nu))
    d = np.maximum(c, base)
    d = np.where(zero, np.maximum(c, EPS_DELTA), d)

    def cubic(x):
        return 2.0 * nu * x**2 * (x - c) - rhs

    def cubic_scale(x):
        return np.maximum.reduce(
            [2.0 * nu * np.abs(x) ** 3, 2.0 * nu * np.abs(c) * x**2, rhs]
        )

    live = ~zero
    for _ in range(100):
        f = cubic(d)
        ok = np.abs(f) <= CUBIC_REL_TOL * np.maximum(cubic_scale(d), 1e-300)
        live = live & ~ok
        if not np.any(live):
            break
        fp = 2.0 * nu * d * (3.0 * d - 2.0 * c)
        step = np.where(live & (fp > 0), f / np.where(fp > 0, fp, 1.0), 0.0)
        d = d - step

    if np.any(live):
        # Bisection fallback on the guaranteed bracket.
        lo = np.zeros_like(d)
        hi = np.maximum(c, 0.0) + base + 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = cubic(mid) < 0.0
            lo = np.where(live & below, mid, lo)
            hi = np.where(live & ~below, mid, hi)
        d = np.where(live, 0.5 * (lo + hi), d)

    return np.where(zero, np.maximum(c, EPS_DELTA), d)


def project_capped_simplex(v) -> np.ndarray:
    """Euclidean projection onto {x : x >= 0, sum(x) <= 1}.

    If clipping negatives already satisfies the sum cap, that is the
    projection; otherwise the cap is active and the result is the standard
    sort-and-scan simplex projection max(v - theta, 0) with theta chosen so
    the entries sum to one.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("expected a 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("entries must be finite")
    clipped = np.maximum(v, 0.0)
    # The slack absorbs the few ulps of round-off a previous projection may
    # carry, making the projection exactly idempotent; it matches the slack
    # the dictionary's column-cap invariant allows.
    if clipped.sum() <= 1.0 + 1e-12:
        return clipped
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.shape[0] + 1)
    rho = int(idx[u - css / idx > 0][-1])
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def reconstruction_loss(atoms: np.ndarray, deltas: np.ndarray, alphas: np.ndarray) -> float:
    """sum_t ||delta_t - B @ alpha_t||^2 with tasks stacked as rows."""
    err = deltas - alphas @ atoms.T
    return float(np.sum(err * err))


def update_dictionary(
    dictionary: DictionaryModel,
    deltas,
    alphas,
    step_size: float,
    n_steps: int = 25,
) -> DictionaryModel:
    """Projected gradient descent on the atom matrix.

    Each step: gradient of the summed reconstruction loss, backtracking
    halving on the step length where candidates are projected column-wise
    onto the capped simplex before evaluation, accepted only on strict
    decrease.  The result never violates the column constraints and never has
    a larger loss than the input.
    """
    if step_size <= 0:
        raise ValueError("step_size must be > 0")
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    d_mat = np.asarray(deltas, dtype=float)
    a_mat = np.asarray(alphas, dtype=float)
    if d_mat.ndim != 2 or a_mat.ndim != 2 or d_mat.shape[0] != a_mat.shape[0]:
        raise ValueError("need matching per-task delta and alpha rows")
    if d_mat.shape[1] != dictionary.n_features or a_mat.shape[1] != dictionary.n_atoms:
        raise ValueError(
            f"deltas {d_mat.shape} / alphas {a_mat.shape} incompatible with "
            f"dictionary {dictionary.atoms.shape}"
        )

    atoms = dictionary.atoms.copy()
    loss = reconstruction_loss(atoms, d_mat, a_mat)
    for _ in range(n_steps):
        err = d_mat - a_mat @ atoms.T
        grad = -2.0 * err.T @ a_mat
        if np.max(np.abs(grad), initial=0.0) < 1e-14:
            break
        eta = step_size
        accepted = False
        for _ in range(30):
            candidate = atoms - eta * grad
            for j in range(candidate.shape[1]):
                candidate[:, j] = project_capped_simplex(candidate[:, j])
            cand_loss = reconstruction_loss(candidate, d_mat, a_mat)
            if cand_loss < loss:
                atoms = candidate
                loss = cand_loss
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
    return DictionaryModel(atoms)
