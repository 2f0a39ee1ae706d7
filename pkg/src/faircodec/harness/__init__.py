"""Experiment orchestration, report emission and the ``faircodec`` CLI."""
from .config import KINDS, CodecSpec, ExperimentConfig, ExperimentConfigError, load_config, parse_config
from .emit import EmitError, csv_scalars, dumps_report, emit_report, report_csv, report_plots, report_scalars, svg_plot
from .experiments import run_experiment

__all__ = [
    "KINDS", "CodecSpec", "EmitError", "ExperimentConfig", "ExperimentConfigError", "csv_scalars",
    "dumps_report", "emit_report", "load_config", "parse_config", "report_csv", "report_plots",
    "report_scalars", "run_experiment", "svg_plot",
]
