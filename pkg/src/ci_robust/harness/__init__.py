"""Experiment harness: configs, CSV ingestion, Monte Carlo runner and CLI."""
from .config import ExperimentConfig, load_config, parse_config_text
from .csvio import ColumnSpec, load_csv
from .runner import Report, ReportRow, run_experiment

__all__ = ["ExperimentConfig", "load_config", "parse_config_text", "ColumnSpec", "load_csv",
           "Report", "ReportRow", "run_experiment"]
