"""Configuration, runner, Monte Carlo validation, export and CLI."""

from .config import SCHEMA, ConfigError, RunSpec, load_config, resolve, validate_config
from .export import export_results, load_results
from .montecarlo import McResult, monte_carlo, wilson_interval
from .runner import RunRecord, run_benchmark

__all__ = [
    "SCHEMA",
    "ConfigError",
    "McResult",
    "RunRecord",
    "RunSpec",
    "export_results",
    "load_config",
    "load_results",
    "monte_carlo",
    "resolve",
    "run_benchmark",
    "validate_config",
    "wilson_interval",
]
