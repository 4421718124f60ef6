"""Independent solvers for the closest interpolating point.

These compute w* = argmin over the interpolating set of D_psi(w, w0),
without running mirror descent, so trained endpoints can be judged
against them.

Linear models
    The constrained minimum satisfies grad psi(w*) = grad psi(w0) + X^T lam
    with X w* = y. For q <= 2 (and entropy), eliminating w* gives an
    n-dimensional smooth convex dual solved by adaptively damped
    (Levenberg) Newton; the damping is the safeguard for near-singular
    dual curvature at the sparsity-inducing corner. For q > 2 the dual
    curvature explodes where solution coordinates cross zero while the
    primal curvature merely vanishes there, so the full primal-dual
    system is Newton-solved instead. Exponents far from 2 are reached by
    warm-started continuation in q. q = 2 itself is solved in closed form
    through the pseudoinverse.

Nonlinear models
    The feasible set is a nonlinear manifold, so a quadratic-penalty
    continuation with warm starts and multi-restart is used. Each
    candidate is finished by a Gauss-Newton feasibility polish; the best
    feasible candidate wins. This yields a local constrained minimizer:
    good enough for one-sided checks (it must never lose to a feasible
    competitor), not a certificate of global optimality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import DegenerateDataError, OracleError
from .models import Dataset, Model, residuals
from .potentials import Potential

__all__ = [
    "OracleResult",
    "closest_interpolant_linear",
    "OracleOptions",
    "closest_interpolant_nonlinear",
    "distance_to_manifold_estimate",
]


@dataclass(frozen=True)
class OracleResult:
    """A certified-feasible candidate for the closest interpolating point."""

    w_star: np.ndarray
    divergence: float
    constraint_violation: float
    method: str
    iterations: int
    violation_path: tuple[float, ...] = ()

    def __post_init__(self):
        if self.divergence < 0:
            raise ValueError("divergence must be nonnegative")


# ---------------------------------------------------------------------------
# linear: dual Newton / closed form
# ---------------------------------------------------------------------------


def _dual_newton_stage(pot, X, y, z0, lam, tol, max_iter):
    """Levenberg-damped Newton on the dual residual g = X h(z0 + X^T lam) - y."""
    n = X.shape[0]

    def g_of(lam):
        with np.errstate(over="ignore", invalid="ignore"):
            return X @ pot.grad_inv(z0 + X.T @ lam) - y

    g = g_of(lam)
    mu = 0.0
    it = 0
    while it < max_iter and np.max(np.abs(g)) > tol:
        it += 1
        theta = z0 + X.T @ lam
        h = pot.grad_inv_deriv(theta)
        h = np.where(np.isfinite(h), h, 1e30)
        J = (X * h) @ X.T
        scale = max(abs(np.trace(J)) / n, 1e-300)
        accepted = False
        for _ in range(80):
            try:
                step = np.linalg.solve(J + mu * np.eye(n), -g)
            except np.linalg.LinAlgError:
                mu = max(mu * 10.0, 1e-12 * scale)
                continue
            g_cand = g_of(lam + step)
            if np.all(np.isfinite(g_cand)) and np.linalg.norm(g_cand) < np.linalg.norm(g):
                lam = lam + step
                g = g_cand
                mu = 0.0 if mu < 1e-14 * scale else mu / 3.0
                accepted = True
                break
            mu = max(mu * 10.0, 1e-10 * scale)
        if not accepted:
            break
    return lam, float(np.max(np.abs(g))), it


def _primal_dual_newton_stage(pot, X, y, z0, w, lam, tol, max_iter):
    """Levenberg-damped Newton on the full KKT system (for q > 2 the primal
    curvature vanishes benignly at coordinate zeros where the dual blows up)."""
    n, d = X.shape
    q = pot.q

    def kkt(w, lam):
        return np.concatenate([pot.grad(w) - z0 - X.T @ lam, X @ w - y])

    def converged(f, lam):
        stat_scale = max(1.0, float(np.max(np.abs(z0 + X.T @ lam))))
        return np.max(np.abs(f[d:])) <= tol and np.max(np.abs(f[:d])) <= tol * stat_scale

    f = kkt(w, lam)
    norm_f = np.linalg.norm(f)
    mu = 0.0
    it = 0
    while it < max_iter and not converged(f, lam):
        it += 1
        with np.errstate(divide="ignore"):
            psi2 = (q - 1.0) * np.abs(w) ** (q - 2.0)
        psi2 = np.where(np.isfinite(psi2), psi2, 1e30)
        J = np.zeros((d + n, d + n))
        J[:d, :d] = np.diag(psi2)
        J[:d, d:] = -X.T
        J[d:, :d] = X
        scale = max(float(np.mean(psi2)), 1e-300)
        accepted = False
        for _ in range(80):
            M = J.copy()
            M[:d, :d] += mu * np.eye(d)
            M[d:, d:] -= mu * np.eye(n)
            try:
                s = np.linalg.solve(M, -f)
            except np.linalg.LinAlgError:
                mu = max(mu * 10.0, 1e-12 * scale)
                continue
            w_c = w + s[:d]
            lam_c = lam + s[d:]
            f_c = kkt(w_c, lam_c)
            if np.all(np.isfinite(f_c)) and np.linalg.norm(f_c) < norm_f:
                w, lam, f = w_c, lam_c, f_c
                norm_f = np.linalg.norm(f)
                mu = 0.0 if mu < 1e-14 * scale else mu / 3.0
                accepted = True
                break
            mu = max(mu * 10.0, 1e-10 * scale)
        if not accepted:
            break
    return w, lam, f, it, converged(f, lam)


def _q_continuation_path(q_target: float) -> list[float]:
    path = []
    q = 2.0
    if q_target > 2.0:
        while q < q_target:
            q = min(q_target, q * 1.5)
            path.append(q)
    elif q_target < 2.0:
        while q > q_target:
            q = max(q_target, q * 0.82)
            path.append(q)
    else:
        path.append(2.0)
    return path


def closest_interpolant_linear(
    pot: Potential,
    X,
    y,
    w0,
    *,
    newton_tol: float = 1e-10,
    max_iter: int = 200,
    feasibility_tol: float = 1e-8,
) -> OracleResult:
    """Minimize D_psi(w, w0) subject to X w = y for a linear model.

    Requires independent rows (rank X = n) and n < d. Each continuation
    stage gets ``max_iter`` damped-Newton iterations; the final stage
    must certify the system to ``newton_tol`` or :class:`OracleError` is
    raised (never a silent wrong answer).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    n, d = X.shape
    if n >= d:
        raise DegenerateDataError(f"need an underdetermined system (n < d), got {n} x {d}")
    if np.linalg.matrix_rank(X) < n:
        raise DegenerateDataError("rank-deficient constraint matrix")

    # q = 2 anchor: minimum-norm correction in closed form
    w_anchor = w0 + np.linalg.lstsq(X, y - X @ w0, rcond=None)[0]
    if pot.kind == "qnorm" and pot.q == 2.0:
        return OracleResult(
            w_star=w_anchor,
            divergence=pot.bregman(w_anchor, w0),
            constraint_violation=float(np.max(np.abs(X @ w_anchor - y))),
            method="closed-form",
            iterations=0,
        )

    stages = (
        [pot] if pot.kind == "entropy" else [Potential("qnorm", q) for q in _q_continuation_path(pot.q)]
    )
    total_iters = 0
    w_prev = w_anchor
    certified = False
    for k, stage in enumerate(stages):
        z0 = stage.grad(w0)
        stage_tol = newton_tol if k == len(stages) - 1 else 1e-8
        if stage.kind == "entropy":
            lam = np.zeros(n)
        else:
            # warm start by matching the previous stage's solution in the dual
            target = stage.grad(np.maximum(w_prev, 1e-300)) if stage.kind == "entropy" else stage.grad(w_prev)
            lam = np.linalg.lstsq(X.T, target - z0, rcond=None)[0]
        if stage.kind == "qnorm" and stage.q > 2.0:
            w_prev, lam, f, it, certified = _primal_dual_newton_stage(
                stage, X, y, z0, w_prev, lam, stage_tol, max_iter
            )
        else:
            lam, g_inf, it = _dual_newton_stage(stage, X, y, z0, lam, stage_tol, max_iter)
            w_prev = stage.grad_inv(z0 + X.T @ lam)
            certified = g_inf <= stage_tol
        total_iters += it
        if not certified:
            raise OracleError(
                f"dual Newton stalled above tolerance at stage {stage.label()} "
                f"after {total_iters} iterations"
            )

    w_star = w_prev
    violation = float(np.max(np.abs(X @ w_star - y)))
    if violation > feasibility_tol:
        raise OracleError(f"linear oracle infeasible: max violation {violation:.3e}")
    return OracleResult(
        w_star=w_star,
        divergence=pot.bregman(w_star, w0),
        constraint_violation=violation,
        method="kkt-newton",
        iterations=total_iters,
    )


# ---------------------------------------------------------------------------
# nonlinear: quadratic-penalty continuation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleOptions:
    mu_max_exponent: int = 8
    inner_gtol_factor: float = 1e-7
    inner_max_iter: int = 400
    feasibility_tol: float = 1e-6
    restarts: int = 2
    perturb_scale: float = 0.01
    seed: int = 0
    polish_max_iter: int = 60


def _gauss_newton_polish(model: Model, data: Dataset, w, tol, max_iter):
    """Minimum-norm Newton steps onto the manifold; returns (w, ok)."""
    w = np.asarray(w, dtype=float).copy()
    for _ in range(max_iter):
        r = residuals(model, w, data)
        if np.max(np.abs(r)) <= tol:
            return w, True
        J = model.jacobian(w, data.X)
        gram = J @ J.T
        gram += (np.trace(gram) / data.n * 1e-14 + 1e-300) * np.eye(data.n)
        try:
            w = w + J.T @ np.linalg.solve(gram, r)
        except np.linalg.LinAlgError:
            return w, False
    return w, bool(np.max(np.abs(residuals(model, w, data))) <= tol)


def closest_interpolant_nonlinear(
    pot: Potential,
    model: Model,
    data: Dataset,
    w0,
    feasible=None,
    opts: OracleOptions | None = None,
) -> OracleResult:
    """Penalty-continuation search for the closest feasible point to w0.

    Starts are w0, the supplied feasible point (e.g. a converged run or
    teacher weights), and seeded perturbations of w0. Raises
    :class:`OracleError` when no candidate reaches the feasibility
    tolerance.
    """
    opts = opts or OracleOptions()
    w0 = np.asarray(w0, dtype=float)
    rng = np.random.default_rng(opts.seed)
    z0 = pot.grad(w0)

    def objective(w, mu):
        r = residuals(model, w, data)
        val = pot.bregman(w, w0) + mu * float(r @ r)
        grad = pot.grad(w) - z0 - 2.0 * mu * (model.jacobian(w, data.X).T @ r)
        return val, grad

    starts: list[np.ndarray] = [w0]
    if feasible is not None:
        starts.append(np.asarray(feasible, dtype=float))
    for _ in range(opts.restarts):
        starts.append(w0 + opts.perturb_scale * rng.standard_normal(w0.size))

    candidates = []
    total_iters = 0
    best_path: tuple[float, ...] = ()
    for start_idx, start in enumerate(starts):
        w = start.copy()
        path = []
        for k in range(opts.mu_max_exponent + 1):
            mu = 10.0**k
            res = optimize.minimize(
                objective,
                w,
                args=(mu,),
                jac=True,
                method="L-BFGS-B",
                options={
                    "maxiter": opts.inner_max_iter,
                    "gtol": opts.inner_gtol_factor * mu,
                    "ftol": 1e-18,
                },
            )
            w = res.x
            total_iters += int(res.nit)
            path.append(float(np.max(np.abs(residuals(model, w, data)))))
        w, ok = _gauss_newton_polish(model, data, w, opts.feasibility_tol, opts.polish_max_iter)
        if ok and pot.in_domain(w):
            candidates.append((start_idx, w, pot.bregman(w, w0), tuple(path)))

    # The supplied feasible point itself (polished) is always a candidate:
    # the oracle must never lose to a feasible competitor it was handed.
    if feasible is not None:
        w, ok = _gauss_newton_polish(
            model, data, np.asarray(feasible, dtype=float), opts.feasibility_tol, opts.polish_max_iter
        )
        if ok and pot.in_domain(w):
            candidates.append((len(starts), w, pot.bregman(w, w0), ()))

    if not candidates:
        raise OracleError("no penalty candidate reached the feasibility tolerance")
    candidates.sort(key=lambda c: (c[2], c[0]))
    _, w_star, div, best_path = candidates[0]
    return OracleResult(
        w_star=w_star,
        divergence=div,
        constraint_violation=float(np.max(np.abs(residuals(model, w_star, data)))),
        method="penalty-descent",
        iterations=total_iters,
        violation_path=best_path,
    )


# ---------------------------------------------------------------------------
# linearized distance to the manifold
# ---------------------------------------------------------------------------


def distance_to_manifold_estimate(model: Model, data: Dataset, w0) -> float:
    """Linearized squared Euclidean distance from w0 to the interpolating set.

    Solves the Jacobian-linearized least-norm correction, giving
    r^T (J J^T)^{-1} r with r the residual at w0. Exact for linear
    models; for networks it quantifies how close a random initialization
    sits to the manifold.
    """
    w0 = np.asarray(w0, dtype=float)
    r = residuals(model, w0, data)
    J = model.jacobian(w0, data.X)
    gram = J @ J.T
    try:
        sol = np.linalg.solve(gram, r)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError("singular Jacobian Gram matrix") from exc
    if not np.all(np.isfinite(sol)):
        raise DegenerateDataError("ill-conditioned Jacobian Gram matrix")
    return float(r @ sol)
