"""Experiment runner: configs, Gram cache, reports and the command line."""
from .cache import GramCache, cache_key
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .runner import ExperimentReport, csv_bytes, run, run_batch, selftest

__all__ = [
    "GramCache",
    "cache_key",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "ExperimentReport",
    "csv_bytes",
    "run",
    "run_batch",
    "selftest",
]
