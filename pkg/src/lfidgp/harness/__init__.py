"""Experiment orchestration: configs, repeated runs, comparison tables."""

from .compare import ComparisonRow, bootstrap_mean_ci, compare_models
from .config import ExperimentConfig, load_config, parse_config
from .records import ResultRecord, read_records, write_records
from .runner import build_reference, run_experiment, run_single

__all__ = [
    "ComparisonRow", "ExperimentConfig", "ResultRecord", "bootstrap_mean_ci", "build_reference",
    "compare_models", "load_config", "parse_config", "read_records", "run_experiment",
    "run_single", "write_records",
]
