"""Nonnegative l1-penalized least squares for the atom-coefficient step.

solve_lasso minimizes ||target - design @ alpha||^2 + l1_weight * ||alpha||_1
over alpha >= 0 by cyclic coordinate descent with a closed-form nonnegative
soft-threshold update per coordinate.  build_mean_reg_system synthesizes the
(design, target) pair that folds a squared pull toward the mean of the other
tasks' coefficients into the same problem shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model_core import DictionaryModel

KKT_TOL = 1e-6
CHANGE_TOL = 1e-10
MAX_SWEEPS = 50_000


@dataclass(frozen=True)
class LassoProblem:
    """Data for one nonnegative LASSO solve.

    degenerate flags an all-zero design column combined with l1_weight == 0,
    in which case that coordinate's optimum is non-unique (the solver leaves
    it at its starting value).
    """

    design: np.ndarray
    target: np.ndarray
    l1_weight: float
    nonneg: bool = True

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        target = np.asarray(self.target, dtype=float)
        if design.ndim != 2:
            raise ValueError("design must be a 2-d matrix")
        if target.shape != (design.shape[0],):
            raise ValueError(
                f"target length {target.shape} does not match design rows {design.shape[0]}"
            )
        if self.l1_weight < 0:
            raise ValueError("l1_weight must be >= 0")
        if not self.nonneg:
            raise ValueError("only the nonnegative problem is supported")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "target", target)

    @property
    def degenerate(self) -> bool:
        zero_col = np.any(np.all(self.design == 0.0, axis=0))
        return bool(zero_col and self.l1_weight == 0.0)

    def objective(self, alpha) -> float:
        r = self.target - self.design @ np.asarray(alpha, dtype=float)
        return float(r @ r) + self.l1_weight * float(np.sum(np.abs(alpha)))


@dataclass(frozen=True)
class LassoResult:
    alpha: np.ndarray
    converged: bool
    n_sweeps: int
    kkt_residual: float


def kkt_residual(problem: LassoProblem, alpha) -> float:
    """Largest violation of the nonnegative-LASSO stationarity conditions.

    With g_k = -2 * design_k @ (target - design @ alpha) + l1_weight:
    coordinates with alpha_k > 0 need g_k == 0; coordinates at zero need
    g_k >= 0.
    """
    alpha = np.asarray(alpha, dtype=float)
    residual = problem.target - problem.design @ alpha
    g = -2.0 * (problem.design.T @ residual) + problem.l1_weight
    active = alpha > 0
    worst = 0.0
    if np.any(active):
        worst = float(np.max(np.abs(g[active])))
    if np.any(~active):
        worst = max(worst, float(np.max(-g[~active], initial=0.0)))
    return worst


def solve_lasso(
    problem: LassoProblem,
    *,
    alpha_init=None,
    max_sweeps: int = MAX_SWEEPS,
    change_tol: float = CHANGE_TOL,
    gram=None,
    certified_exit: bool = True,
) -> LassoResult:
    """Cyclic nonnegative coordinate descent, ascending index order.

    Updates run against the Gram matrix design' design (pass a precomputed
    one via `gram` when solving many problems with a shared design).  Sweeps
    stop when the largest coordinate change drops below change_tol, when the
    cheap per-sweep stationarity bound certifies convergence well inside
    KKT_TOL (disable with certified_exit=False to run to the exact fixed
    point), or at max_sweeps; converged reports whether the authoritative
    KKT residual at exit is within KKT_TOL.
    """
    design = problem.design
    target = problem.target
    lam = problem.l1_weight
    n_coords = design.shape[1]
    if gram is None:
        gram = design.T @ design
    elif gram.shape != (n_coords, n_coords):
        raise ValueError("gram must be design' design")
    col_sq = np.diagonal(gram).copy()
    h = design.T @ target

    if alpha_init is None:
        alpha = np.zeros(n_coords)
    else:
        alpha = np.asarray(alpha_init, dtype=float).copy()
        if alpha.shape != (n_coords,):
            raise ValueError("alpha_init must have one entry per design column")
        if np.any(alpha < 0):
            raise ValueError("alpha_init must be nonnegative")

    half_lam = 0.5 * lam
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        # Fresh recompute each sweep stops incremental round-off drift.
        q = gram @ alpha
        max_change = 0.0
        for k in range(n_coords):
            c_sq = col_sq[k]
            if c_sq == 0.0:
                continue
            a_old = alpha[k]
            rho = h[k] - q[k] + c_sq * a_old
            a_new = (rho - half_lam) / c_sq
            if a_new < 0.0:
                a_new = 0.0
            if a_new != a_old:
                alpha[k] = a_new
                q += (a_new - a_old) * gram[k]
                change = abs(a_new - a_old)
                if change > max_change:
                    max_change = change
        if max_change < change_tol:
            break
        # Certified early exit: the maintained gradient gives the
        # stationarity residual for free; the margin under the contract
        # tolerance covers one sweep of incremental round-off, and the
        # authoritative check below still rules.
        if not certified_exit:
            continue
        g = -2.0 * (h - q) + lam
        bound = float(
            np.max(np.where(alpha > 0.0, np.abs(g), np.maximum(-g, 0.0)))
        )
        if bound <= KKT_TOL * 0.5:
            break
        if sweeps % 256 == 0:
            # Descent is stalling; the exact active-set finisher usually
            # closes a near-flat face in one shot.
            polished = _active_set_finish(gram, h, lam, alpha)
            if polished is not None and _objective_from_gram(
                gram, h, lam, polished
            ) <= _objective_from_gram(gram, h, lam, alpha) + 1e-9:
                alpha = polished.copy()
                break

    residual = kkt_residual(problem, alpha)
    if residual > KKT_TOL:
        # Cyclic descent can crawl on the near-flat face of a rank-deficient
        # design; the problem is a nonnegative QP, so an active-set solve
        # finishes it exactly.  Keep the descent iterate when the finisher
        # cannot certify.
        polished = _active_set_finish(gram, h, lam, alpha)
        if polished is not None and problem.objective(polished) <= problem.objective(
            alpha
        ) + 1e-9:
            polished_residual = kkt_residual(problem, polished)
            if polished_residual < residual:
                alpha = polished
                residual = polished_residual
    alpha = alpha.copy()
    alpha.setflags(write=False)
    return LassoResult(
        alpha=alpha,
        converged=residual <= KKT_TOL,
        n_sweeps=sweeps,
        kkt_residual=residual,
    )


def _objective_from_gram(gram, h, lam, alpha) -> float:
    """||target - A a||^2 + lam ||a||_1 up to the constant target' target."""
    return float(alpha @ gram @ alpha - 2.0 * (h @ alpha) + lam * alpha.sum())


def _active_set_finish(gram, h, lam, alpha0, max_iters=200):
    """Finite active-set solve of min ||target - A a||^2 + lam 1'a, a >= 0.

    Stationarity on the working set solves G_SS x = h_S - lam/2; negative
    entries drop out of the set, off-set coordinates with a descent direction
    enter, and the loop ends when the full KKT system holds.  Returns None
    when no certifiable point is found (singular faces can defeat the
    least-squares subsolve).
    """
    k = alpha0.shape[0]
    active = alpha0 > 0
    for _ in range(max_iters):
        candidate = np.zeros(k)
        if np.any(active):
            sub = gram[np.ix_(active, active)]
            rhs = h[active] - lam / 2.0
            x, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
            if np.any(x < -1e-12):
                idx = np.flatnonzero(active)
                active[idx[np.argmin(x)]] = False
                continue
            candidate[active] = np.maximum(x, 0.0)
        g = -2.0 * (h - gram @ candidate) + lam
        if np.any(active) and np.max(np.abs(g[active])) > KKT_TOL * 0.5:
            return None  # inconsistent working set; let the caller keep CD's iterate
        off = np.flatnonzero(~active)
        if off.size:
            worst = off[np.argmin(g[off])]
            if g[worst] < -KKT_TOL * 0.5:
                active[worst] = True
                continue
        return candidate
    return None


@dataclass(frozen=True)
class MeanRegSystem:
    """Synthesized (design, target) for the mean-regularized coefficient step."""

    design: np.ndarray
    target: np.ndarray
    rank_deficient: bool


def build_mean_reg_system(
    dictionary: DictionaryModel,
    delta,
    nu: float,
    lambda3: float,
    other_alphas,
    n_tasks: int,
) -> MeanRegSystem:
    """Fold the mean pull into a plain least-squares design.

    The coefficient subproblem for task t is, up to an additive constant,
    alpha' Q alpha - 2 alpha' p with
        Q = nu * B'B + lambda3 * ((T-1)/T)^2 * I
        p = nu * B' delta + lambda3 * (T-1)/T^2 * sum_{j != t} alpha_j.
    Factoring Q = C'C through a symmetric eigendecomposition and solving
    C'd = p turns it into ||C alpha - d||^2 + gamma * ||alpha||_1, ready for
    solve_lasso.  Q is positive definite whenever lambda3 > 0; with
    lambda3 == 0 a singular B'B is handled with a pseudo-inverse solve and
    rank_deficient set.
    """
    if n_tasks < 2:
        raise ValueError("mean regularization needs at least two tasks")
    if nu <= 0:
        raise ValueError("nu must be > 0")
    if lambda3 < 0:
        raise ValueError("lambda3 must be >= 0")
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (dictionary.n_features,):
        raise ValueError("delta length must match dictionary feature count")
    others = [np.asarray(a, dtype=float) for a in other_alphas]
    if len(others) != n_tasks - 1:
        raise ValueError(f"expected {n_tasks - 1} other coefficient vectors, got {len(others)}")
    k = dictionary.n_atoms
    for a in others:
        if a.shape != (k,):
            raise ValueError("every coefficient vector must have one entry per atom")

    b = dictionary.atoms
    t = float(n_tasks)
    q = nu * (b.T @ b) + lambda3 * ((t - 1.0) / t) ** 2 * np.eye(k)
    p = nu * (b.T @ delta)
    if others:
        p = p + lambda3 * (t - 1.0) / t**2 * np.sum(others, axis=0)

    evals, vecs = np.linalg.eigh(q)
    scale = max(float(evals[-1]), 0.0)
    cutoff = scale * k * np.finfo(float).eps
    rank_deficient = bool(float(evals[0]) <= cutoff)
    roots = np.sqrt(np.clip(evals, 0.0, None))
    design = roots[:, None] * vecs.T
    vp = vecs.T @ p
    safe = roots > (np.sqrt(scale) * 1e-12 if scale > 0 else 0.0)
    target = np.where(safe, vp / np.where(safe, roots, 1.0), 0.0)
    return MeanRegSystem(design=design, target=target, rank_deficient=rank_deficient)
