"""Initialization-by-mirror experiment grids and their analyses.

A grid trains every (initialization, mirror) pair on one shared problem,
then distance matrices measure every final point against every initial
point in a chosen Bregman divergence. The theory predicts each row's
argmin lands on its matched column: the run whose mirror matches the
measuring divergence and whose initialization matches the row.

Divergence entries are always oriented D(final, initial), matching the
D(w, w0) orientation of the convergence results.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ExperimentError, NumericError
from .models import Dataset, Loss, Model
from .oracles import OracleResult
from .potentials import Potential
from .training import SMDConfig, TrainResult, replay_with_reference, train, tune_step_size

__all__ = [
    "MirrorSpec",
    "ExperimentGrid",
    "Run",
    "GridResult",
    "make_init",
    "run_single",
    "run_grid",
    "DistanceMatrix",
    "distance_matrix",
    "HistogramSummary",
    "histogram",
    "GeneralizationReport",
    "generalization_eval",
    "Theorem2Report",
    "theorem2_report",
]


@dataclass(frozen=True)
class MirrorSpec:
    """A mirror to run: its potential and step size (None = auto-tune)."""

    pot: Potential
    eta: float | None = None


@dataclass(frozen=True)
class ExperimentGrid:
    """Cross product of initializations and mirrors on one fixed problem.

    ``inits`` are (seed, scale) pairs; each draws w0 with i.i.d. mean-zero
    normal entries of the given standard deviation. A single cell is
    allowed, but at least 2 x 2 makes the distance matrices meaningful.
    """

    model: Model
    loss: Loss
    data: Dataset
    inits: tuple[tuple[int, float], ...]
    mirrors: tuple[MirrorSpec, ...]
    base_cfg: SMDConfig

    def __post_init__(self):
        if len(self.inits) < 1 or len(self.mirrors) < 1:
            raise ValueError("grid needs at least one init and one mirror")


@dataclass(frozen=True, eq=False)
class Run:
    """One grid cell: everything needed to analyze or replay it."""

    pot: Potential
    eta: float
    cfg: SMDConfig
    model: Model
    loss: Loss
    data: Dataset
    w0: np.ndarray
    result: TrainResult | None
    error: str | None = None
    init_index: int = 0
    mirror_index: int = 0
    init_seed: int = 0
    init_scale: float = 0.0

    @property
    def converged(self) -> bool:
        return self.result is not None and self.result.converged

    @property
    def w_final(self) -> np.ndarray | None:
        return None if self.result is None else self.result.w_final


@dataclass(frozen=True, eq=False)
class GridResult:
    grid: ExperimentGrid
    runs: tuple[Run, ...]
    etas: tuple[float, ...]  # per mirror, after auto-tuning

    def cell(self, init_index: int, mirror_index: int) -> Run:
        return self.runs[init_index * len(self.grid.mirrors) + mirror_index]


def make_init(p: int, seed: int, scale: float) -> np.ndarray:
    """i.i.d. mean-zero normal initialization around zero."""
    return np.random.default_rng(seed).standard_normal(p) * scale


def run_single(
    pot: Potential,
    model: Model,
    loss: Loss,
    data: Dataset,
    w0,
    cfg: SMDConfig,
    *,
    init_index: int = 0,
    mirror_index: int = 0,
    init_seed: int = 0,
    init_scale: float = 0.0,
    eta_retries: int = 0,
) -> Run:
    """Train one cell; optionally halve eta and retry on non-convergence.

    Halving preserves any convexity check the step size passed, so
    retried cells stay within the tuned regime; the eta actually used is
    recorded on the run.
    """
    w0 = np.asarray(w0, dtype=float)
    result = None
    error = None
    for attempt in range(eta_retries + 1):
        try:
            result = train(pot, model, loss, data, w0, cfg)
            error = None
        except NumericError as exc:
            result = None
            error = str(exc)
        if result is not None and result.converged:
            break
        if attempt < eta_retries:
            cfg = replace(cfg, eta=cfg.eta * 0.5)
    return Run(
        pot=pot,
        eta=cfg.eta,
        cfg=cfg,
        model=model,
        loss=loss,
        data=data,
        w0=w0,
        result=result,
        error=error,
        init_index=init_index,
        mirror_index=mirror_index,
        init_seed=init_seed,
        init_scale=init_scale,
    )


def run_grid(grid: ExperimentGrid, *, eta_retries: int = 3) -> GridResult:
    """Train every cell; cells fail independently, a fully failed grid raises.

    Auto-tuned step sizes are resolved once per mirror from the first
    initialization, so reruns are deterministic.
    """
    first_seed, first_scale = grid.inits[0]
    w0_first = make_init(grid.model.p, first_seed, first_scale)
    etas = []
    for spec in grid.mirrors:
        if spec.eta is not None:
            etas.append(float(spec.eta))
        else:
            etas.append(
                tune_step_size(spec.pot, grid.model, grid.loss, grid.data, w0_first)
            )

    runs = []
    for i, (seed, scale) in enumerate(grid.inits):
        w0 = make_init(grid.model.p, seed, scale)
        for j, spec in enumerate(grid.mirrors):
            cfg = replace(grid.base_cfg, eta=etas[j])
            runs.append(
                run_single(
                    spec.pot,
                    grid.model,
                    grid.loss,
                    grid.data,
                    w0,
                    cfg,
                    init_index=i,
                    mirror_index=j,
                    init_seed=seed,
                    init_scale=scale,
                    eta_retries=eta_retries,
                )
            )
    if all(r.error is not None for r in runs):
        raise ExperimentError("every grid cell failed")
    return GridResult(grid=grid, runs=tuple(runs), etas=tuple(etas))


# ---------------------------------------------------------------------------
# distance matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Row-per-initialization distances to selected final points.

    ``values[r, c]`` is D_measure(final_c, init_r); NaN marks a
    non-converged cell (excluded from the argmin). ``diagonal_pass`` is
    true when every row's finite argmin is its matched column.
    """

    measure: Potential
    mode: str
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    values: np.ndarray
    matched_cols: tuple[int, ...]
    argmins: tuple[int | None, ...]
    diagonal_pass: bool


def _measure_mirror_index(grid: ExperimentGrid, measure: Potential) -> int:
    for j, spec in enumerate(grid.mirrors):
        if spec.pot == measure:
            return j
    raise ValueError(f"measurement potential {measure.label()} is not one of the grid mirrors")


def distance_matrix(result: GridResult, measure: Potential, mode: str = "full-cross") -> DistanceMatrix:
    """Assemble the distance matrix for one measuring divergence.

    Modes:
      * ``by-mirror``: rows = inits, columns = that init's runs across
        mirrors; matched column is the measure's own mirror.
      * ``by-init``: rows = inits, columns = the measure-matched mirror's
        runs across inits; matched column is the row's own init.
      * ``full-cross``: rows = inits, columns = every (init, mirror) run;
        matched column combines both.
    """
    grid = result.grid
    n_init = len(grid.inits)
    m_idx = _measure_mirror_index(grid, measure)
    inits = [make_init(grid.model.p, seed, scale) for seed, scale in grid.inits]
    row_labels = tuple(f"init{i}" for i in range(n_init))

    if mode == "by-mirror":
        cols = [(None, j) for j in range(len(grid.mirrors))]
        col_labels = tuple(spec.pot.label() for spec in grid.mirrors)
        matched = tuple(m_idx for _ in range(n_init))
    elif mode == "by-init":
        cols = [(i, m_idx) for i in range(n_init)]
        col_labels = tuple(f"final{i}|{measure.label()}" for i in range(n_init))
        matched = tuple(range(n_init))
    elif mode == "full-cross":
        cols = [(i, j) for i in range(n_init) for j in range(len(grid.mirrors))]
        col_labels = tuple(
            f"final{i}|{spec.pot.label()}" for i in range(n_init) for spec in grid.mirrors
        )
        matched = tuple(i * len(grid.mirrors) + m_idx for i in range(n_init))
    else:
        raise ValueError(f"unknown matrix mode {mode!r}")

    values = np.full((n_init, len(cols)), np.nan)
    for r in range(n_init):
        for c, (ci, cj) in enumerate(cols):
            run = result.cell(r if ci is None else ci, cj)
            if run.converged:
                values[r, c] = measure.bregman(run.w_final, inits[r])

    argmins: list[int | None] = []
    pass_all = True
    for r in range(n_init):
        row = values[r]
        if np.all(np.isnan(row)):
            argmins.append(None)
            pass_all = False
            continue
        k = int(np.nanargmin(row))
        argmins.append(k)
        pass_all = pass_all and (k == matched[r])
    return DistanceMatrix(
        measure=measure,
        mode=mode,
        row_labels=row_labels,
        col_labels=col_labels,
        values=values,
        matched_cols=matched,
        argmins=tuple(argmins),
        diagonal_pass=pass_all,
    )


# ---------------------------------------------------------------------------
# histograms and generalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HistogramSummary:
    label: str
    bin_edges: np.ndarray
    counts: np.ndarray
    tau: float
    near_zero_fraction: float


def histogram(w, bins: int = 100, tau: float = 1e-3, label: str = "") -> HistogramSummary:
    """Histogram of |w_j| plus the fraction of entries with |w_j| <= tau."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    mag = np.abs(np.asarray(w, dtype=float))
    counts, edges = np.histogram(mag, bins=bins)
    frac = float(np.mean(mag <= tau))
    return HistogramSummary(label=label, bin_edges=edges, counts=counts, tau=tau, near_zero_fraction=frac)


@dataclass(frozen=True)
class GeneralizationReport:
    label: str
    mse: float
    accuracy: float | None = None


def generalization_eval(
    model: Model,
    w,
    X_test,
    y_test,
    *,
    classification: bool = False,
    label: str = "",
) -> GeneralizationReport:
    """Held-out mean squared error, plus 0-1 accuracy for classification."""
    X_test = np.asarray(X_test, dtype=float)
    y_test = np.asarray(y_test, dtype=float)
    if X_test.shape[0] == 0:
        raise ValueError("test split is empty")
    yhat = model.predict_batch(w, X_test)
    mse = float(np.mean((y_test - yhat) ** 2))
    acc = None
    if classification:
        acc = float(np.mean(np.where(yhat >= 0, 1.0, -1.0) == np.sign(y_test)))
    return GeneralizationReport(label=label, mse=mse, accuracy=acc)


# ---------------------------------------------------------------------------
# implicit-regularization closeness report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Theorem2Report:
    """Closeness of a converged endpoint to the constrained-closest point.

    ``ratio`` = D(w*, w_final) / D(w*, w0) is the headline number; the
    identity cross-check telescopes the per-step decomposition over the
    whole run against w* and reports the defect.
    """

    div_star_final: float
    div_star_init: float
    ratio: float
    identity_gap: float | None
    identity_tol: float | None
    identity_ok: bool | None


def theorem2_report(run: Run, oracle: OracleResult, *, cross_check: bool = True) -> Theorem2Report:
    if run.result is None:
        raise ValueError("cannot report on a failed run")
    pot = run.pot
    d_star_final = pot.bregman(oracle.w_star, run.result.w_final)
    d_star_init = pot.bregman(oracle.w_star, run.w0)
    ratio = d_star_final / max(d_star_init, 1e-300)
    gap = tol = ok = None
    if cross_check:
        rep = replay_with_reference(
            run.pot, run.model, run.loss, run.data, run.w0, run.cfg, oracle.w_star
        )
        gap = rep.identity_gap
        # per-step float round-off accumulates over the run
        scale = max(1.0, abs(rep.dpsi_start), rep.sum_mixed + rep.sum_loss + abs(rep.sum_dli))
        tol = 1e-10 * scale * max(1.0, np.sqrt(rep.steps))
        ok = bool(gap <= tol)
    return Theorem2Report(
        div_star_final=d_star_final,
        div_star_init=d_star_init,
        ratio=float(ratio),
        identity_gap=gap,
        identity_tol=tol,
        identity_ok=ok,
    )
