"""Experiment specs, parallel sweeps, plots and the command-line interface."""

from .config import ExperimentSpec, SpecError, parse_spec
from .plots import emit_plots
from .sweep import run_sweep

__all__ = ["ExperimentSpec", "SpecError", "emit_plots", "parse_spec", "run_sweep"]
