"""Overlap and density figures from a sweep CSV.

For each experiment id in the CSV two SVGs are written, ``<id>_overlap.svg``
and ``<id>_density.svg``, with one line per rule cell showing the mean over
seeds. Runs that stopped early keep their last value for later rounds, so a
converged run still counts as overlap 1 in the mean.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..metrics import max_expected_density  # noqa: E402
from .sweep import SUMMARY_NAME  # noqa: E402

# Deterministic SVG output: fixed element ids, no timestamp.
plt.rcParams["svg.hashsalt"] = "assembly-sim"
plt.rcParams["svg.fonttype"] = "none"


def _series(rows: list[dict], column: str, horizon: int) -> np.ndarray:
    """Seed-mean of ``column`` per round, forward-filling finished runs."""
    runs: dict[str, dict[int, float]] = defaultdict(dict)
    for row in rows:
        runs[row["seed"]][int(row["t"])] = float(row[column])
    stacked = []
    for values in runs.values():
        line, last = [], math.nan
        for t in range(1, horizon + 1):
            last = values.get(t, last)
            line.append(last)
        stacked.append(line)
    arr = np.array(stacked, dtype=float)
    with np.errstate(all="ignore"):
        counts = np.sum(~np.isnan(arr), axis=0)
        sums = np.nansum(arr, axis=0)
    return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def _r_max(csv_path: Path, area: tuple[int, int, float] | None) -> float | None:
    if area is not None:
        return max_expected_density(*area).r_max
    summary = csv_path.parent / SUMMARY_NAME
    if summary.exists():
        data = json.loads(summary.read_text(encoding="utf-8"))
        a = data["area"]
        return max_expected_density(a["n"], a["k"], a["p"]).r_max
    return None


def build_figures(csv_path: str | Path, area: tuple[int, int, float] | None = None):
    """Yield ``(file stem, figure)`` pairs without saving them.

    ``area`` is ``(n, k, p)`` for the density reference line; when omitted it
    is read from the ``summary.json`` beside the CSV, if present.
    """
    csv_path = Path(csv_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{csv_path} holds no trajectory rows")
    r_max = _r_max(csv_path, area)

    grouped: dict[str, dict[tuple[str, str], list[dict]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        grouped[row["experiment_id"]][(row["rule"], row["params"])].append(row)

    for exp, cells in grouped.items():
        horizon = max(int(r["t"]) for rs in cells.values() for r in rs)
        rounds = np.arange(1, horizon + 1)
        for column, label, suffix in (("overlap", "overlap $o_t$", "overlap"),
                                      ("density_ratio", "density ratio $r_t$", "density")):
            fig, ax = plt.subplots(figsize=(6.4, 4.2))
            for (rule, params), cell_rows in cells.items():
                ax.plot(rounds, _series(cell_rows, column, horizon), marker=".",
                        label=f"{rule} {params}".strip())
            ax.set_xlabel("round $t$")
            ax.set_ylabel(label)
            if column == "overlap":
                ax.set_ylim(0.0, 1.0)
            elif r_max is not None:
                ax.axhline(r_max, color="black", linestyle="--", linewidth=1,
                           label=f"$r_{{max}}$ = {r_max:.3g}")
                ax.set_ylim(0.0, 1.5 * r_max)
            ax.set_title(exp)
            ax.legend(fontsize="small")
            fig.tight_layout()
            yield f"{exp}_{suffix}", fig


def emit_plots(csv_path: str | Path, out_dir: str | Path,
               area: tuple[int, int, float] | None = None) -> list[Path]:
    """Write the figures as SVG; returns the paths in creation order."""
    out_dir = Path(out_dir)
    figures = build_figures(csv_path, area)
    first = next(figures)  # raises on an empty CSV before anything is created
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, fig in itertools.chain([first], figures):
        path = out_dir / f"{stem}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
