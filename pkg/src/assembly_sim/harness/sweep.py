"""Run every (rule cell, seed) pair of an experiment and write the results.

Outputs in ``spec.output_dir``:

``trajectories.csv``
    one row per round of every run, ordered by cell, then seed, then round,
    whatever the number of worker processes.
``summary.json``
    per cell: median convergence round (or ``"none"``), mean and std of the
    final density ratio, and any errors raised by individual runs.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import statistics
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from ..metrics import max_expected_density
from ..projection import ProjectionConfig, project_until_convergence
from .config import Cell, ExperimentSpec

log = logging.getLogger(__name__)

CSV_HEADER = ["experiment_id", "rule", "params", "seed", "t",
              "overlap", "density_ratio", "support_size"]
CSV_NAME = "trajectories.csv"
SUMMARY_NAME = "summary.json"


@dataclass
class RunOutcome:
    cell: int
    seed: int
    rows: list[tuple[int, float, float, int]]  # t, overlap, density, support
    converged_round: int | None
    final_density_ratio: float
    error: str | None = None


def _run_one(spec: ExperimentSpec, cell: Cell, seed: int) -> RunOutcome:
    cfg = ProjectionConfig(area=spec.area, rule=cell.rule, seed=seed,
                           recurrent=spec.recurrent, max_rounds=spec.max_rounds,
                           early_stop_at_full_overlap=spec.early_stop,
                           initial_weight=spec.initial_weight)
    try:
        traj = project_until_convergence(cfg)
    except Exception as exc:  # a failing run must not sink the sweep
        log.warning("cell %d seed %d failed: %s", cell.index, seed, exc)
        return RunOutcome(cell.index, seed, [], None, math.nan,
                          error="".join(traceback.format_exception_only(type(exc), exc)).strip())
    rows = [(r.t, r.overlap, r.density_ratio, r.support_size) for r in traj.records]
    return RunOutcome(cell.index, seed, rows, traj.converged_round, traj.final_density_ratio)


def _jobs(spec: ExperimentSpec) -> Iterator[tuple[ExperimentSpec, Cell, int]]:
    for cell in spec.cells:
        for seed in spec.seeds:
            yield spec, cell, seed


def _star(args):
    return _run_one(*args)


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def summarize_cell(cell: Cell, outcomes: list[RunOutcome]) -> dict:
    ok = [o for o in outcomes if o.error is None]
    rounds = [o.converged_round for o in ok if o.converged_round is not None]
    finals = [o.final_density_ratio for o in ok if not math.isnan(o.final_density_ratio)]
    # The median is only meaningful if most runs converged.
    if ok and len(rounds) * 2 > len(ok):
        conv = statistics.median(
            [math.inf if o.converged_round is None else o.converged_round for o in ok])
    else:
        conv = "none"
    return {
        "rule": cell.rule_label,
        "params": cell.params_label,
        "runs": len(outcomes),
        "converged_runs": len(rounds),
        "convergence_round": conv,
        "convergence_rounds": [o.converged_round for o in ok],
        "final_density_ratio_mean": statistics.fmean(finals) if finals else None,
        "final_density_ratio_std": statistics.pstdev(finals) if len(finals) > 1 else (0.0 if finals else None),
        "errors": [{"seed": o.seed, "error": o.error} for o in outcomes if o.error],
    }


def run_sweep(spec: ExperimentSpec, jobs: int = 1, out_dir: str | os.PathLike | None = None) -> Path:
    """Run the experiment; returns the output directory."""
    out = Path(out_dir) if out_dir is not None else spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    work = list(_jobs(spec))
    log.info("%s: %d runs on %d worker(s)", spec.experiment, len(work), jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_star, work))  # map preserves input order
    else:
        outcomes = [_star(w) for w in work]

    with open(out / CSV_NAME, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for o in outcomes:
            cell = spec.cells[o.cell]
            for t, ov, r, support in o.rows:
                writer.writerow([spec.experiment, cell.rule_label, cell.params_label,
                                 o.seed, t, _num(ov), _num(r), support])

    by_cell: dict[int, list[RunOutcome]] = {}
    for o in outcomes:
        by_cell.setdefault(o.cell, []).append(o)
    bound = max_expected_density(spec.area.n, spec.area.k, spec.area.p)
    summary = {
        "experiment_id": spec.experiment,
        "area": {"n": spec.area.n, "k": spec.area.k, "p": spec.area.p},
        "r_max": bound.r_max,
        "seeds": spec.seeds,
        "max_rounds": spec.max_rounds,
        "cells": [summarize_cell(c, by_cell.get(c.index, [])) for c in spec.cells],
    }
    with open(out / SUMMARY_NAME, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return out
