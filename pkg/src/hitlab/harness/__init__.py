"""Experiment configs, the CLI and formula/simulation comparison reports."""
from .commands import (ComparisonRow, cmd_compare, cmd_estimate, cmd_eval, cmd_sausage, cmd_scaling_check,
                       formula_value, read_eval_csv)
from .config import ConfigError, ExperimentConfig, Thresholds, load_config, parse_config

__all__ = [
    "ComparisonRow", "ConfigError", "ExperimentConfig", "Thresholds", "cmd_compare", "cmd_estimate",
    "cmd_eval", "cmd_sausage", "cmd_scaling_check", "formula_value", "load_config", "parse_config",
    "read_eval_csv",
]
