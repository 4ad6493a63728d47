"""Experiment specs, Monte Carlo drivers, rate fits, oracle gates and the CLI."""

from .config import KINDS, ConfigError, ExperimentSpec, load_spec, parse_spec
from .experiments import EXPERIMENTS, RunReport, run_experiment
from .fitting import SlopeFit, fit_slope

__all__ = [
    "KINDS",
    "ConfigError",
    "ExperimentSpec",
    "load_spec",
    "parse_spec",
    "EXPERIMENTS",
    "RunReport",
    "run_experiment",
    "SlopeFit",
    "fit_slope",
]
