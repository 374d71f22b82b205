"""Experiment orchestration: configuration, sweeps, rate fits and reports."""

from .config import ExperimentConfig, config_from_dict, load_config
from .pipeline import TARGETS, ConvergenceReport, run_pipeline
from .rates import RateFit, RateTarget, fit_rate
from .report import svg_loglog, write_csv, write_json

__all__ = [
    "TARGETS",
    "ConvergenceReport",
    "ExperimentConfig",
    "RateFit",
    "RateTarget",
    "config_from_dict",
    "fit_rate",
    "load_config",
    "run_pipeline",
    "svg_loglog",
    "write_csv",
    "write_json",
]
