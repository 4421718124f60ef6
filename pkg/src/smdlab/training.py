"""The stochastic mirror descent loop and its per-step verification tools.

One SMD step maps the iterate into the dual space, takes a gradient step
there on the sampled loss, and maps back:

    w_next = grad_inv( grad(w) - eta * grad L_i(w) )

For the squared Euclidean potential both maps are the identity and the
step is exactly SGD. ``train`` walks samples cyclically (or reshuffled
per epoch), is deterministic given seeds, and can record per-step
diagnostics against a designated reference point in the interpolating
set.

``verify_identity`` evaluates the exact five-term decomposition of the
one-step change in Bregman divergence to an interpolating reference,
which must cancel to float round-off for any model, any potential, and
any step size; the residual is its checkable content.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateDataError, NumericError
from .models import (
    Dataset,
    Loss,
    Model,
    is_interpolating,
    loss_grad,
    loss_value,
    residuals,
    total_loss,
    train_accuracy,
)
from .potentials import Potential

__all__ = [
    "SMDConfig",
    "replace_eta",
    "Trace",
    "TrainResult",
    "smd_step",
    "train",
    "d_li",
    "IdentityReport",
    "verify_identity",
    "step_size_bound_linear",
    "StepSizeReport",
    "step_size_check_general",
    "tune_step_size",
    "Assumption1Report",
    "assumption1_check",
    "ReplayReport",
    "replay_with_reference",
]


@dataclass(frozen=True)
class SMDConfig:
    """Step size, sampling order, stopping rule, and trace options.

    ``order`` is "cyclic" (default; every index recurs each n steps) or
    "shuffled" (fresh permutation per epoch from ``seed``). Stopping:
    total loss <= ``loss_threshold``, or sign accuracy >= ``accuracy_target``
    when set, or ``max_steps``.
    """

    eta: float
    order: str = "cyclic"
    seed: int = 0
    loss_threshold: float = 1e-10
    max_steps: int = 100_000
    accuracy_target: float | None = None
    record_trace: bool = False
    trace_ref: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.eta > 0.0:
            raise ValueError("eta must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.loss_threshold < 0.0:
            raise ValueError("loss_threshold must be nonnegative")
        if self.order not in ("cyclic", "shuffled"):
            raise ValueError(f"unknown sampling order {self.order!r}")


def replace_eta(cfg: SMDConfig, eta: float) -> SMDConfig:
    return replace(cfg, eta=float(eta))


@dataclass(frozen=True)
class Trace:
    """Per-step records: sample index, post-step sample loss, and (when a
    reference was designated) D_psi(ref, w_i) and the reference D_Li term."""

    sample_idx: np.ndarray
    sample_loss: np.ndarray
    dpsi_ref: np.ndarray | None = None
    dli_ref: np.ndarray | None = None


@dataclass(frozen=True)
class TrainResult:
    w_final: np.ndarray
    steps_taken: int
    final_total_loss: float
    converged: bool
    trace: Trace | None = None


def smd_step(pot: Potential, model: Model, loss: Loss, w, sample, eta: float):
    """One mirror step on the sampled loss; returns the next iterate."""
    x, y = sample
    g = loss_grad(loss, model, w, x, y)
    z = pot.grad(w) - eta * g
    w_next = pot.grad_inv(z)
    if not np.all(np.isfinite(w_next)):
        raise NumericError("non-finite SMD update")
    if not pot.in_domain(w_next):
        raise NumericError("SMD update left the potential domain")
    return w_next


def _index_stream(n: int, cfg: SMDConfig):
    if cfg.order == "cyclic":
        while True:
            yield from range(n)
    else:
        rng = np.random.default_rng(cfg.seed)
        while True:
            yield from rng.permutation(n)


def _stopped(loss: Loss, model: Model, w, data: Dataset, cfg: SMDConfig) -> tuple[bool, float]:
    tot = total_loss(loss, model, w, data)
    if tot <= cfg.loss_threshold:
        return True, tot
    if cfg.accuracy_target is not None and train_accuracy(model, w, data) >= cfg.accuracy_target:
        return True, tot
    return False, tot


def train(
    pot: Potential,
    model: Model,
    loss: Loss,
    data: Dataset,
    w0,
    cfg: SMDConfig,
    step_hook=None,
) -> TrainResult:
    """Run SMD until the stopping rule fires.

    Deterministic given (w0, cfg, inputs). ``step_hook(step, idx, w_prev,
    w_next)`` is invoked after each step; it is the supported way to
    attach per-step analyses without storing the trajectory.
    """
    w = np.asarray(w0, dtype=float).copy()
    if not pot.in_domain(w):
        raise NumericError("w0 outside the potential's domain")
    done, tot = _stopped(loss, model, w, data, cfg)
    if done:
        trace = Trace(np.empty(0, dtype=int), np.empty(0)) if cfg.record_trace else None
        return TrainResult(w, 0, tot, True, trace)

    record = cfg.record_trace
    ref = None if cfg.trace_ref is None else np.asarray(cfg.trace_ref, dtype=float)
    idx_hist: list[int] = []
    loss_hist: list[float] = []
    dpsi_hist: list[float] = []
    dli_hist: list[float] = []

    n = data.n
    stream = _index_stream(n, cfg)
    converged = False
    steps = 0
    for step in range(cfg.max_steps):
        idx = next(stream)
        x = data.X[idx]
        y = data.y[idx]
        if record and ref is not None:
            dli_hist.append(d_li(model, loss, ref, w, (x, y)))
        try:
            w_next = smd_step(pot, model, loss, w, (x, y), cfg.eta)
        except NumericError as exc:
            raise NumericError(f"step {step}: {exc}") from exc
        if record:
            idx_hist.append(int(idx))
            loss_hist.append(loss_value(loss, model, w_next, x, y))
            if ref is not None:
                dpsi_hist.append(pot.bregman(ref, w_next))
        if step_hook is not None:
            step_hook(step, int(idx), w, w_next)
        w = w_next
        steps = step + 1
        if steps % n == 0:
            done, tot = _stopped(loss, model, w, data, cfg)
            if done:
                converged = True
                break
    tot = total_loss(loss, model, w, data)
    converged = converged or tot <= cfg.loss_threshold
    trace = None
    if record:
        trace = Trace(
            sample_idx=np.array(idx_hist, dtype=int),
            sample_loss=np.array(loss_hist),
            dpsi_ref=np.array(dpsi_hist) if ref is not None else None,
            dli_ref=np.array(dli_hist) if ref is not None else None,
        )
    return TrainResult(w, steps, tot, converged, trace)


# ---------------------------------------------------------------------------
# Bregman-style loss difference and the per-step identity
# ---------------------------------------------------------------------------


def d_li(model: Model, loss: Loss, w, w_prev, sample) -> float:
    """L_i(w) - L_i(w') - <grad L_i(w'), w - w'>.

    Shaped like a Bregman divergence but built from the per-sample loss,
    which need not be convex, so the value may be negative.
    """
    x, y = sample
    w = np.asarray(w, dtype=float)
    w_prev = np.asarray(w_prev, dtype=float)
    lw = loss_value(loss, model, w, x, y)
    lp = loss_value(loss, model, w_prev, x, y)
    gp = loss_grad(loss, model, w_prev, x, y)
    return lw - lp - float(gp @ (w - w_prev))


@dataclass(frozen=True)
class IdentityReport:
    """The five terms of the one-step divergence decomposition.

    lhs = D_psi(ref, w_prev) must equal the sum of: D_psi(ref, w_next),
    the mixed (psi - eta L_i) divergence of the step, eta L_i(w_next),
    and eta D_Li(ref, w_prev). ``residual`` is lhs minus that sum.
    """

    lhs: float
    term_dpsi_next: float
    term_mixed: float
    term_loss: float
    term_dli: float
    residual: float
    w_next: np.ndarray = field(repr=False, compare=False, default=None)

    def within(self, rel_tol: float = 1e-8) -> bool:
        return abs(self.residual) <= rel_tol * max(1.0, abs(self.lhs))


def verify_identity(
    pot: Potential,
    model: Model,
    loss: Loss,
    w_ref,
    w_prev,
    sample,
    eta: float,
    *,
    data: Dataset | None = None,
    interp_tol: float = 1e-6,
) -> IdentityReport:
    """Take one SMD step from ``w_prev`` and evaluate the exact identity.

    ``w_ref`` must interpolate: the full dataset is checked when ``data``
    is passed, otherwise the sampled point alone.
    """
    w_ref = np.asarray(w_ref, dtype=float)
    w_prev = np.asarray(w_prev, dtype=float)
    x, y = sample
    if data is not None:
        if not is_interpolating(model, w_ref, data, interp_tol):
            worst = float(np.max(np.abs(residuals(model, w_ref, data))))
            raise ValueError(f"w_ref is not interpolating (max residual {worst:.3e})")
    elif abs(y - model.predict(w_ref, x)) > interp_tol:
        raise ValueError("w_ref does not interpolate the sampled point")

    w_next = smd_step(pot, model, loss, w_prev, sample, eta)
    lhs = pot.bregman(w_ref, w_prev)
    t_next = pot.bregman(w_ref, w_next)
    t_mixed = pot.bregman(w_next, w_prev) - eta * d_li(model, loss, w_next, w_prev, sample)
    t_loss = eta * loss_value(loss, model, w_next, x, y)
    t_dli = eta * d_li(model, loss, w_ref, w_prev, sample)
    residual = lhs - (t_next + t_mixed + t_loss + t_dli)
    return IdentityReport(lhs, t_next, t_mixed, t_loss, t_dli, residual, w_next)


# ---------------------------------------------------------------------------
# step-size conditions
# ---------------------------------------------------------------------------


def step_size_bound_linear(data: Dataset) -> float:
    """1 / max_i ||x_i||^2: the classical safe step for SGD on linear models."""
    norms2 = np.sum(data.X**2, axis=1)
    if np.any(norms2 == 0.0):
        raise DegenerateDataError("zero input row; step-size bound undefined")
    return float(1.0 / np.max(norms2))


@dataclass(frozen=True)
class StepSizeReport:
    passed: bool
    worst_margin: float
    pairs_checked: int


def step_size_check_general(
    pot: Potential,
    model: Model,
    loss: Loss,
    data: Dataset,
    eta: float,
    region_center,
    radius: float,
    samples: int,
    *,
    seed: int = 0,
    tol: float = 1e-12,
) -> StepSizeReport:
    """Sampled midpoint-convexity check of psi - eta * L_i over a region.

    Pair midpoints are drawn inside the Euclidean ball around
    ``region_center``; segment directions alternate between per-sample
    gradient rows (where the loss curvature concentrates, on a
    deterministic half-length ladder) and random directions. Evidence,
    not proof.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    center = np.asarray(region_center, dtype=float)
    p = center.size
    rng = np.random.default_rng(seed)
    J = model.jacobian(center, data.X)
    ladder = (0.25, 0.5, 0.75, 1.0)

    def g(w, i):
        return pot.value(w) - eta * loss_value(loss, model, w, data.X[i], data.y[i])

    worst = np.inf
    checked = 0
    for k in range(samples):
        v = rng.standard_normal(p)
        base = center + radius * rng.uniform() * v / np.linalg.norm(v)
        if k % 2 == 0 and data.n > 0:
            row = J[(k // 2) % data.n]
            nrm = np.linalg.norm(row)
            u = row / nrm if nrm > 0 else rng.standard_normal(p)
            t = radius * ladder[(k // (2 * max(data.n, 1))) % len(ladder)]
        else:
            u = rng.standard_normal(p)
            u /= np.linalg.norm(u)
            t = radius * rng.uniform(0.1, 1.0)
        a = base + t * u
        b = base - t * u
        if not (pot.in_domain(a) and pot.in_domain(b)):
            continue
        for i in range(data.n):
            margin = 0.5 * (g(a, i) + g(b, i)) - g(base, i)
            worst = min(worst, margin)
        checked += 1
    if checked == 0:
        raise NumericError("no sampled pair landed inside the potential domain")
    return StepSizeReport(passed=bool(worst >= -tol), worst_margin=float(worst), pairs_checked=checked)


def tune_step_size(
    pot: Potential,
    model: Model,
    loss: Loss,
    data: Dataset,
    center,
    *,
    radius: float | None = None,
    samples: int = 48,
    seed: int = 0,
    eta0: float | None = None,
    safety: float = 0.5,
    max_halvings: int = 80,
    probe_epochs: int = 300,
    ladder_size: int = 20,
    ladder_factor: float = 4.0,
    refine_top: int = 3,
    refine_mult: int = 6,
) -> float:
    """Grid-search a step size downward until the convexity check passes,
    then pick the fastest-converging candidate below it.

    The starting guess linearizes the update in mirror coordinates at the
    anticipated solution scale (the Jacobian least-norm correction of the
    center): eta0 = 1 / max_i <grad f_i, h'(z) grad f_i> with h the
    inverse mirror map, which reduces to the classical linear bound at
    q = 2. The region radius defaults to the linearized
    distance-to-manifold scale, widened for q < 2 potentials whose
    divergence balls extend much further than their Euclidean radius.

    A sampled check is evidence about the condition, not about speed, and
    for stiff mirror geometries it can sit orders of magnitude away from
    the usable range in either direction. So the returned step size is
    chosen empirically below the first check-passing value: a geometric
    ladder of candidates is probed with short real runs, the best few are
    probed again at ``refine_mult`` times the budget, and the lowest
    probe loss wins (ties to the larger step). Every candidate still
    passes the check: psi - eta L with smaller eta is a convex
    combination of psi and the checked psi - eta0 L.
    """
    center = np.asarray(center, dtype=float)
    J = model.jacobian(center, data.X)
    r = residuals(model, center, data)
    gram = J @ J.T
    try:
        correction = J.T @ np.linalg.solve(gram, r)
    except np.linalg.LinAlgError:
        correction = np.zeros_like(center)
    w_hat = center + correction
    if radius is None:
        est = float(correction @ correction)
        radius = 1.5 * np.sqrt(max(est, 0.0)) + 1e-3
        if pot.kind == "qnorm":
            # coordinate extent of the divergence ball that covers both the
            # center and the anticipated solution
            eps_hat = pot.value(w_hat) + pot.bregman(w_hat, center)
            extent = (pot.q * max(eps_hat, 0.0) + 1e-12) ** (1.0 / pot.q)
            radius = max(radius, float(extent))
    if eta0 is None:
        z = np.abs(pot.grad(w_hat))
        if pot.kind == "qnorm":
            # floor dual magnitudes at the typical coordinate's: near-zero
            # coordinates have astronomical dual stiffness for q > 2 but
            # leave that zone in a single finite step
            w_scale = float(np.sqrt(np.mean(w_hat**2)))
            if w_scale > 0:
                z = np.maximum(z, w_scale ** (pot.q - 1.0))
        h = pot.grad_inv_deriv(z)
        h = np.where(np.isfinite(h), h, np.max(h[np.isfinite(h)], initial=1.0))
        curv = np.max(np.einsum("ij,j,ij->i", J, h, J))
        eta0 = 1.0 / curv if curv > 0 else 1.0
    eta = float(eta0)
    passed = False
    # The check is centered on the anticipated solution: the iterates leave
    # the initialization corner in one dual step, and for q > 2 the potential
    # has no curvature there, so a w0-centered sample can never pass. The
    # ball still contains the initialization (radius >= ||w_hat - center||).
    for _ in range(max_halvings):
        report = step_size_check_general(
            pot, model, loss, data, eta, w_hat, radius, samples, seed=seed
        )
        if report.passed:
            passed = True
            break
        eta *= 0.5
    if not passed:
        raise NumericError(f"no stable step size found below {eta0:g}")
    eta *= safety

    def probe_loss(cand: float, steps: int) -> float:
        probe = SMDConfig(eta=cand, max_steps=steps, loss_threshold=1e-300)
        try:
            out = train(pot, model, loss, data, center, probe)
        except NumericError:
            return np.inf
        return out.final_total_loss if np.isfinite(out.final_total_loss) else np.inf

    steps = max(probe_epochs * data.n, 1)
    ladder = [eta / ladder_factor**k for k in range(ladder_size)]
    coarse = [(probe_loss(cand, steps), -cand) for cand in ladder]
    ranked = sorted(zip(coarse, ladder))
    finalists = [cand for (score, _), cand in ranked[:refine_top] if np.isfinite(score)]
    if not finalists:
        raise NumericError(f"no stable step size found below {eta0:g}")
    best_eta = None
    best = (np.inf, 0.0)
    for cand in finalists:
        score = (probe_loss(cand, refine_mult * steps), -cand)
        if score < best:
            best = score
            best_eta = cand
    if best_eta is None or not np.isfinite(best[0]):
        raise NumericError(f"no stable step size found below {eta0:g}")
    return best_eta


# ---------------------------------------------------------------------------
# trajectory checks and deterministic replay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Assumption1Report:
    all_nonneg: bool
    min_value: float
    argmin: int
    max_dpsi: float


def assumption1_check(
    pot: Potential,
    model: Model,
    loss: Loss,
    data: Dataset,
    w_ref,
    trajectory,
    sample_indices=None,
    *,
    interp_tol: float = 1e-6,
) -> Assumption1Report:
    """Evaluate the reference D_Li terms along a trajectory.

    ``trajectory[t]`` is paired with the sample visited from it
    (cyclic order when ``sample_indices`` is omitted). Also reports the
    largest D_psi(ref, w_t), i.e. the observed region radius.
    """
    w_ref = np.asarray(w_ref, dtype=float)
    if not is_interpolating(model, w_ref, data, interp_tol):
        raise ValueError("w_ref is not interpolating")
    traj = [np.asarray(w, dtype=float) for w in trajectory]
    if sample_indices is None:
        sample_indices = [t % data.n for t in range(len(traj))]
    vals = np.array(
        [
            d_li(model, loss, w_ref, w, (data.X[i], data.y[i]))
            for w, i in zip(traj, sample_indices, strict=True)
        ]
    )
    dpsi = max(pot.bregman(w_ref, w) for w in traj)
    k = int(np.argmin(vals))
    return Assumption1Report(bool(np.all(vals >= 0.0)), float(vals[k]), k, float(dpsi))


@dataclass(frozen=True)
class ReplayReport:
    """Per-step quantities re-derived against an arbitrary reference point.

    ``identity_gap`` is the telescoped identity defect
    |D(ref, w0) - D(ref, w_T) - sum of step terms| over the whole run.
    """

    dli_ref: np.ndarray
    dpsi_ref: np.ndarray
    sum_mixed: float
    sum_loss: float
    sum_dli: float
    dpsi_start: float
    dpsi_end: float
    identity_gap: float
    steps: int
    w_final: np.ndarray = field(repr=False, compare=False, default=None)


def replay_with_reference(
    pot: Potential,
    model: Model,
    loss: Loss,
    data: Dataset,
    w0,
    cfg: SMDConfig,
    w_ref,
) -> ReplayReport:
    """Re-run a deterministic schedule, accumulating terms against ``w_ref``.

    Avoids storing O(steps * p) trajectories: the run is reproduced
    bitwise and each step's mixed, loss, and reference terms are summed
    on the fly.
    """
    w_ref = np.asarray(w_ref, dtype=float)
    eta = cfg.eta
    dli_hist: list[float] = []
    dpsi_hist: list[float] = []
    sums = {"mixed": 0.0, "loss": 0.0, "dli": 0.0}

    def hook(step, idx, w_prev, w_next):
        sample = (data.X[idx], data.y[idx])
        dli_prev = d_li(model, loss, w_ref, w_prev, sample)
        sums["mixed"] += pot.bregman(w_next, w_prev) - eta * d_li(model, loss, w_next, w_prev, sample)
        sums["loss"] += eta * loss_value(loss, model, w_next, data.X[idx], data.y[idx])
        sums["dli"] += eta * dli_prev
        dli_hist.append(dli_prev)
        dpsi_hist.append(pot.bregman(w_ref, w_next))

    quiet = replace(cfg, record_trace=False, trace_ref=None)
    result = train(pot, model, loss, data, w0, quiet, step_hook=hook)
    start = pot.bregman(w_ref, np.asarray(w0, dtype=float))
    end = pot.bregman(w_ref, result.w_final)
    gap = abs(start - end - (sums["mixed"] + sums["loss"] + sums["dli"]))
    return ReplayReport(
        dli_ref=np.array(dli_hist),
        dpsi_ref=np.array(dpsi_hist),
        sum_mixed=sums["mixed"],
        sum_loss=sums["loss"],
        sum_dli=sums["dli"],
        dpsi_start=start,
        dpsi_end=end,
        identity_gap=gap,
        steps=result.steps_taken,
        w_final=result.w_final,
    )
