"""Command-line surface.

Subcommands: train, grid, verify-identity, oracle-compare,
distance-matrix, histogram, check-stepsize. Exit codes: 0 success,
1 configuration/usage error, 2 numeric or oracle failure, 3 I/O or
file-format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from .config import (
    ExperimentConfig,
    base_smd_config,
    build_dataset,
    build_loss,
    build_model,
    load_config,
    mirror_potentials,
    render_config,
)
from .errors import ConfigError, FormatError, NumericError, SmdLabError
from .experiments import (
    ExperimentGrid,
    MirrorSpec,
    distance_matrix,
    generalization_eval,
    histogram,
    make_init,
    run_grid,
    run_single,
    theorem2_report,
)
from .models import residuals
from .oracles import closest_interpolant_linear, closest_interpolant_nonlinear
from .potentials import qnorm
from .reports import emit_results, matrix_to_dict
from .training import (
    replace_eta,
    step_size_bound_linear,
    step_size_check_general,
    tune_step_size,
    verify_identity,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; the contract wants 1
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="smdlab", description="Stochastic mirror descent lab")
    parser.add_argument("--version", action="version", version=f"smdlab {__version__}")
    parser.add_argument("--config", type=str, default=None, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the config's base seed")
    parser.add_argument("--out", type=str, default=None, help="output directory override")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.add_parser("train", help="run one (first init x first mirror) training run")
    sub.add_parser("grid", help="run the full init x mirror experiment")
    sub.add_parser("verify-identity", help="per-step decomposition residual sweep")
    sub.add_parser("oracle-compare", help="closest-interpolant reports per mirror")
    sub.add_parser("distance-matrix", help="recompute matrices from saved checkpoints")
    hist = sub.add_parser("histogram", help="weight-magnitude histogram of a checkpoint")
    hist.add_argument("checkpoint", type=str)
    hist.add_argument("--bins", type=int, default=None)
    hist.add_argument("--tau", type=float, default=None)
    sub.add_parser("check-stepsize", help="sampled convexity check per mirror")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    from dataclasses import replace

    if args.seed is not None:
        base = int(args.seed)
        cfg = replace(
            cfg,
            dataset=replace(cfg.dataset, seed=base),
            inits=replace(cfg.inits, seeds=tuple(base + 1 + k for k in range(len(cfg.inits.seeds)))),
        )
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _say(args, *parts) -> None:
    if not args.quiet:
        print(*parts)


def _setup(args):
    if args.config is None:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    model = build_model(cfg)
    loss = build_loss(cfg)
    data, teacher = build_dataset(cfg, model)
    return cfg, model, loss, data, teacher


def _grid_from_config(cfg, model, loss, data) -> ExperimentGrid:
    return ExperimentGrid(
        model=model,
        loss=loss,
        data=data,
        inits=tuple((s, cfg.inits.scale) for s in cfg.inits.seeds),
        mirrors=tuple(MirrorSpec(qnorm(m.q), m.eta) for m in cfg.mirrors),
        base_cfg=base_smd_config(cfg),
    )


def _ckpt_name(seed: int, mirror_label: str, stage: str) -> str:
    return f"run_i{seed}_{mirror_label.replace('=', '')}_{stage}.ckpt"


def _cmd_train(args) -> int:
    cfg, model, loss, data, _ = _setup(args)
    pot = qnorm(cfg.mirrors[0].q)
    seed, scale = cfg.inits.seeds[0], cfg.inits.scale
    w0 = make_init(model.p, seed, scale)
    smd_cfg = base_smd_config(cfg)
    eta = cfg.mirrors[0].eta
    if eta is None:
        eta = tune_step_size(pot, model, loss, data, w0)
        _say(args, f"tuned eta = {eta:.6g}")
    run = run_single(pot, model, loss, data, w0, replace_eta(smd_cfg, eta), eta_retries=3, init_seed=seed)
    if run.result is None:
        raise NumericError(run.error or "training failed")
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(outdir / _ckpt_name(seed, pot.label(), "init"), Checkpoint.for_run(model, pot, seed, 0, w0))
    save_checkpoint(
        outdir / _ckpt_name(seed, pot.label(), "final"),
        Checkpoint.for_run(model, pot, seed, run.result.steps_taken, run.result.w_final),
    )
    summary = {
        "mirror": pot.label(),
        "eta": run.eta,
        "converged": run.result.converged,
        "steps": run.result.steps_taken,
        "final_total_loss": run.result.final_total_loss,
        "residual_inf": float(np.max(np.abs(residuals(model, run.result.w_final, data)))),
    }
    (outdir / "run.json").write_text(json.dumps(summary, indent=2) + "\n")
    _say(args, f"converged={summary['converged']} steps={summary['steps']} residual_inf={summary['residual_inf']:.3e}")
    if not run.result.converged:
        _say(args, "warning: run did not converge within max_steps")
    return 0


def _cmd_grid(args) -> int:
    cfg, model, loss, data, _ = _setup(args)
    grid = _grid_from_config(cfg, model, loss, data)
    result = run_grid(grid)
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for run in result.runs:
        if run.result is None:
            continue
        save_checkpoint(
            outdir / _ckpt_name(run.init_seed, run.pot.label(), "init"),
            Checkpoint.for_run(model, run.pot, run.init_seed, 0, run.w0),
        )
        save_checkpoint(
            outdir / _ckpt_name(run.init_seed, run.pot.label(), "final"),
            Checkpoint.for_run(model, run.pot, run.init_seed, run.result.steps_taken, run.result.w_final),
        )
    matrices = []
    for spec in grid.mirrors:
        for mode in ("by-mirror", "by-init", "full-cross"):
            matrices.append(distance_matrix(result, spec.pot, mode))
    histograms = [
        histogram(r.result.w_final, cfg.histogram_bins, cfg.histogram_tau, label=f"init{r.init_index}|{r.pot.label()}")
        for r in result.runs
        if r.converged
    ]
    generalization = []
    if data.X_test is not None:
        classification = cfg.loss != "square"
        for r in result.runs:
            if r.converged:
                generalization.append(
                    generalization_eval(
                        model, r.result.w_final, data.X_test, data.y_test,
                        classification=classification, label=f"init{r.init_index}|{r.pot.label()}",
                    )
                )
    from dataclasses import replace

    # the output path is environmental; keep results byte-identical across
    # --out choices
    echoed = json.loads(render_config(replace(cfg, out_dir="")))
    del echoed["out_dir"]
    files = emit_results(
        outdir,
        grid=result,
        matrices=matrices,
        histograms=histograms,
        generalization=generalization,
        metadata=echoed,
    )
    _say(args, f"wrote {len(files)} files to {outdir}")
    bad = [r for r in result.runs if not r.converged]
    if bad:
        _say(args, f"warning: {len(bad)} run(s) not converged")
    return 0


def _cmd_verify_identity(args) -> int:
    cfg, model, loss, data, teacher = _setup(args)
    if teacher is None:
        raise ConfigError("verify-identity needs a synthetic dataset (teacher reference)")
    steps = min(cfg.stop.max_steps, 1000)
    report_lines = []
    worst_overall = 0.0
    for m in cfg.mirrors:
        pot = qnorm(m.q)
        w0 = make_init(model.p, cfg.inits.seeds[0], cfg.inits.scale)
        eta = m.eta if m.eta is not None else tune_step_size(pot, model, loss, data, w0)
        w = w0
        worst = 0.0
        for step in range(steps):
            idx = step % data.n
            rep = verify_identity(
                pot, model, loss, teacher, w, (data.X[idx], data.y[idx]), eta, data=data
            )
            worst = max(worst, abs(rep.residual) / max(1.0, abs(rep.lhs)))
            w = rep.w_next
        worst_overall = max(worst_overall, worst)
        report_lines.append(f"{pot.label()}: worst relative residual {worst:.3e} over {steps} steps")
    for line in report_lines:
        _say(args, line)
    if args.out or cfg.out_dir:
        outdir = Path(args.out or cfg.out_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "identity_report.txt").write_text("\n".join(report_lines) + "\n")
    if worst_overall > 1e-8:
        raise NumericError(f"identity residual {worst_overall:.3e} exceeds 1e-8")
    return 0


def _cmd_oracle_compare(args) -> int:
    cfg, model, loss, data, _ = _setup(args)
    smd_cfg = base_smd_config(cfg)
    seed, scale = cfg.inits.seeds[0], cfg.inits.scale
    w0 = make_init(model.p, seed, scale)
    reports = []
    for m in cfg.mirrors:
        pot = qnorm(m.q)
        eta = m.eta if m.eta is not None else tune_step_size(pot, model, loss, data, w0)
        run = run_single(pot, model, loss, data, w0, replace_eta(smd_cfg, eta), eta_retries=3, init_seed=seed)
        if not run.converged:
            reports.append((pot.label(), None))
            _say(args, f"{pot.label()}: run did not converge; skipping oracle")
            continue
        if model.kind == "linear":
            oracle = closest_interpolant_linear(pot, data.X, data.y, w0)
        else:
            oracle = closest_interpolant_nonlinear(pot, model, data, w0, feasible=run.result.w_final)
        rep = theorem2_report(run, oracle)
        reports.append((pot.label(), rep))
        _say(
            args,
            f"{pot.label()}: D(w*,w0)={rep.div_star_init:.6g} D(w*,w_final)={rep.div_star_final:.6g} "
            f"ratio={rep.ratio:.4g} identity_ok={rep.identity_ok}",
        )
    outdir = Path(args.out or cfg.out_dir)
    emit_results(outdir, theorem2=[(label, r) for label, r in reports if r is not None])
    return 0


def _cmd_distance_matrix(args) -> int:
    cfg, model, loss, data, _ = _setup(args)
    outdir = Path(args.out or cfg.out_dir)
    mirrors = [qnorm(m.q) for m in cfg.mirrors]
    finals = {}
    inits = {}
    for seed in cfg.inits.seeds:
        for pot in mirrors:
            final_path = outdir / _ckpt_name(seed, pot.label(), "final")
            if not final_path.exists():
                raise FormatError(f"missing checkpoint {final_path}; run `smdlab grid` first")
            finals[(seed, pot.label())] = load_checkpoint(final_path, expected_model=model).w
        inits[seed] = make_init(model.p, seed, cfg.inits.scale)
    matrices = []
    for measure in mirrors:
        values = np.empty((len(cfg.inits.seeds), len(cfg.inits.seeds) * len(mirrors)))
        col_labels = []
        for c, (seed, pot) in enumerate((s, p) for s in cfg.inits.seeds for p in mirrors):
            col_labels.append(f"final{seed}|{pot.label()}")
            for r, rs in enumerate(cfg.inits.seeds):
                values[r, c] = measure.bregman(finals[(seed, pot.label())], inits[rs])
        m_idx = [p.label() for p in mirrors].index(measure.label())
        matched = tuple(i * len(mirrors) + m_idx for i in range(len(cfg.inits.seeds)))
        argmins = tuple(int(np.argmin(values[r])) for r in range(values.shape[0]))
        from .experiments import DistanceMatrix

        matrices.append(
            DistanceMatrix(
                measure=measure,
                mode="full-cross",
                row_labels=tuple(f"init{s}" for s in cfg.inits.seeds),
                col_labels=tuple(col_labels),
                values=values,
                matched_cols=matched,
                argmins=argmins,
                diagonal_pass=all(a == m for a, m in zip(argmins, matched)),
            )
        )
    emit_results(outdir, matrices=matrices)
    for m in matrices:
        _say(args, f"{m.measure.label()} full-cross diagonal_pass={m.diagonal_pass}")
    return 0


def _cmd_histogram(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    bins = args.bins
    tau = args.tau
    if args.config is not None:
        cfg = load_config(args.config)
        bins = bins if bins is not None else cfg.histogram_bins
        tau = tau if tau is not None else cfg.histogram_tau
    bins = bins if bins is not None else 100
    tau = tau if tau is not None else 1e-3
    h = histogram(ckpt.w, bins, tau, label=Path(args.checkpoint).stem)
    _say(args, f"near_zero_fraction(|w| <= {tau:g}) = {h.near_zero_fraction:.6g}")
    if args.out:
        emit_results(args.out, histograms=[h])
    return 0


def _cmd_check_stepsize(args) -> int:
    cfg, model, loss, data, _ = _setup(args)
    w0 = make_init(model.p, cfg.inits.seeds[0], cfg.inits.scale)
    lines = []
    for m in cfg.mirrors:
        pot = qnorm(m.q)
        eta = m.eta if m.eta is not None else tune_step_size(pot, model, loss, data, w0)
        radius = 1.0 + float(np.linalg.norm(w0))
        report = step_size_check_general(pot, model, loss, data, eta, w0, radius, 64)
        line = f"{pot.label()}: eta={eta:.6g} passed={report.passed} worst_margin={report.worst_margin:.3e}"
        if model.kind == "linear":
            line += f" (linear bound {step_size_bound_linear(data):.6g})"
        lines.append(line)
        _say(args, line)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "stepsize_report.txt").write_text("\n".join(lines) + "\n")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "grid": _cmd_grid,
    "verify-identity": _cmd_verify_identity,
    "oracle-compare": _cmd_oracle_compare,
    "distance-matrix": _cmd_distance_matrix,
    "histogram": _cmd_histogram,
    "check-stepsize": _cmd_check_stepsize,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("error: a subcommand is required", file=sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SmdLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
