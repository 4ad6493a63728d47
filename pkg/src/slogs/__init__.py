"""Regularized stochastic logarithmic Schrödinger equation on a periodic interval.

Spectral grid and propagators (:mod:`slogs.field`), the regularization
``f_eps`` (:mod:`slogs.regularization`), Q-Wiener noise
(:mod:`slogs.noise`), sub-flows and splitting schemes (:mod:`slogs.flows`,
:mod:`slogs.schemes`), structure functionals (:mod:`slogs.observables`),
brute-force references (:mod:`slogs.oracle`) and the experiment harness
(:mod:`slogs.harness`).
"""

from .field import Grid, make_grid
from .flows import DiffusionG
from .noise import NoiseModel, NoisePath, Window, build_noise, sample_path
from .regularization import RegFamily, validate_assumptions
from .schemes import SCHEMES, SchemeConfig, StepFailure, run_trajectory

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "make_grid",
    "DiffusionG",
    "NoiseModel",
    "NoisePath",
    "Window",
    "build_noise",
    "sample_path",
    "RegFamily",
    "validate_assumptions",
    "SCHEMES",
    "SchemeConfig",
    "StepFailure",
    "run_trajectory",
    "__version__",
]
