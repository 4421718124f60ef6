"""Result emission: machine-readable JSON, per-matrix CSV, and text tables.

The JSON and CSV files carry full precision (shortest round-trip decimal
via ``repr``); the human tables round to 6 significant digits. Output is
byte-deterministic for identical inputs: no timestamps, no environment
echoes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .experiments import (
    DistanceMatrix,
    GeneralizationReport,
    GridResult,
    HistogramSummary,
    Theorem2Report,
)
from .models import residuals

__all__ = ["emit_results", "run_summaries", "matrix_to_dict"]


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def run_summaries(result: GridResult) -> list[dict]:
    out = []
    for run in result.runs:
        entry = {
            "init_index": run.init_index,
            "mirror_index": run.mirror_index,
            "init_seed": run.init_seed,
            "init_scale": run.init_scale,
            "mirror": run.pot.label(),
            "eta": run.eta,
            "error": run.error,
        }
        if run.result is not None:
            res_inf = float(np.max(np.abs(residuals(run.model, run.result.w_final, run.data))))
            entry.update(
                converged=run.result.converged,
                steps=run.result.steps_taken,
                final_total_loss=run.result.final_total_loss,
                residual_inf=res_inf,
            )
        else:
            entry.update(converged=False, steps=None, final_total_loss=None, residual_inf=None)
        out.append(entry)
    return out


def matrix_to_dict(m: DistanceMatrix) -> dict:
    return {
        "measure": m.measure.label(),
        "mode": m.mode,
        "row_labels": list(m.row_labels),
        "col_labels": list(m.col_labels),
        "values": _jsonable(m.values),
        "matched_cols": list(m.matched_cols),
        "argmins": list(m.argmins),
        "diagonal_pass": m.diagonal_pass,
    }


def _histogram_to_dict(h: HistogramSummary) -> dict:
    return {
        "label": h.label,
        "tau": h.tau,
        "near_zero_fraction": h.near_zero_fraction,
        "bin_edges": _jsonable(h.bin_edges),
        "counts": _jsonable(h.counts),
    }


def _theorem2_to_dict(label: str, r: Theorem2Report) -> dict:
    return {
        "label": label,
        "div_star_final": r.div_star_final,
        "div_star_init": r.div_star_init,
        "ratio": r.ratio,
        "identity_gap": r.identity_gap,
        "identity_tol": r.identity_tol,
        "identity_ok": r.identity_ok,
    }


def _matrix_csv(path: Path, m: DistanceMatrix) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row"] + list(m.col_labels) + ["argmin_col", "matched_col", "diagonal_hit"])
        for r, label in enumerate(m.row_labels):
            cells = [repr(float(v)) if math.isfinite(v) else "" for v in m.values[r]]
            arg = m.argmins[r]
            writer.writerow(
                [label]
                + cells
                + ["" if arg is None else arg, m.matched_cols[r], arg == m.matched_cols[r]]
            )


def _histogram_csv(path: Path, h: HistogramSummary) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        for k in range(len(h.counts)):
            writer.writerow([repr(float(h.bin_edges[k])), repr(float(h.bin_edges[k + 1])), int(h.counts[k])])


def _format_table(m: DistanceMatrix) -> str:
    lines = [f"distances in {m.measure.label()} divergence ({m.mode}); * marks the row argmin"]
    width = max([len(c) for c in m.col_labels] + [12])
    header = " " * 10 + "".join(f"{c:>{width + 2}}" for c in m.col_labels)
    lines.append(header)
    for r, label in enumerate(m.row_labels):
        cells = []
        for c in range(m.values.shape[1]):
            v = m.values[r, c]
            text = "missing" if not math.isfinite(v) else f"{v:.6g}"
            if m.argmins[r] == c:
                text = "*" + text
            cells.append(f"{text:>{width + 2}}")
        lines.append(f"{label:<10}" + "".join(cells))
    lines.append(f"diagonal_pass: {m.diagonal_pass}")
    return "\n".join(lines)


def emit_results(
    outdir: str | Path,
    *,
    grid: GridResult | None = None,
    matrices: list[DistanceMatrix] = (),
    histograms: list[HistogramSummary] = (),
    theorem2: list[tuple[str, Theorem2Report]] = (),
    generalization: list[GeneralizationReport] = (),
    metadata: dict | None = None,
) -> list[Path]:
    """Write results.json, one CSV per matrix/histogram, and tables.txt."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    doc = {
        "metadata": _jsonable(metadata or {}),
        "runs": run_summaries(grid) if grid is not None else [],
        "etas": list(grid.etas) if grid is not None else [],
        "matrices": [matrix_to_dict(m) for m in matrices],
        "histograms": [_histogram_to_dict(h) for h in histograms],
        "theorem2": [_theorem2_to_dict(label, r) for label, r in theorem2],
        "generalization": [
            {"label": g.label, "mse": g.mse, "accuracy": g.accuracy} for g in generalization
        ],
    }
    results_path = outdir / "results.json"
    results_path.write_text(json.dumps(doc, indent=2) + "\n")
    written.append(results_path)

    for m in matrices:
        name = f"matrix_{m.measure.label().replace('=', '')}_{m.mode}.csv"
        path = outdir / name
        _matrix_csv(path, m)
        written.append(path)

    for h in histograms:
        safe = h.label.replace("=", "").replace(" ", "_") or "weights"
        path = outdir / f"hist_{safe}.csv"
        _histogram_csv(path, h)
        written.append(path)

    tables = outdir / "tables.txt"
    blocks = [_format_table(m) for m in matrices]
    if histograms:
        blocks.append(
            "near-zero weight fractions (|w| <= tau):\n"
            + "\n".join(
                f"  {h.label:<10} tau={h.tau:g}  fraction={h.near_zero_fraction:.6g}"
                for h in histograms
            )
        )
    if generalization:
        blocks.append(
            "held-out performance per mirror:\n"
            + "\n".join(
                f"  {g.label:<10} mse={g.mse:.6g}"
                + (f"  accuracy={g.accuracy:.6g}" if g.accuracy is not None else "")
                for g in generalization
            )
        )
    tables.write_text("\n\n".join(blocks) + "\n")
    written.append(tables)
    return written
