"""Configuration, persistence, Monte-Carlo runs and the command-line harness."""

from .config import ConfigError, ExperimentConfig, from_dict, load_config
from .io import DatasetFormatError, ResultTable, read_csv, read_dataset, write_csv, write_dataset
from .runs import run_rate_vs_snr, run_robustness_sweep, run_timing

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "from_dict",
    "load_config",
    "DatasetFormatError",
    "ResultTable",
    "read_csv",
    "read_dataset",
    "write_csv",
    "write_dataset",
    "run_rate_vs_snr",
    "run_robustness_sweep",
    "run_timing",
]
