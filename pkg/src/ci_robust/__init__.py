"""Regression-based conditional independence tests and their robustness analysis."""
from .citests import (ABSOLUTE, SQUARED, LossFunction, StfrConfig, crt, gcm, rbpt, rbpt2, resit,
                      stfr)
from .core_stats import Method, TestOutcome
from .models import ConditionalModel, Dataset, FittedModel, IntegrationConfig, make_factory
from .rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "ABSOLUTE", "SQUARED", "LossFunction", "StfrConfig", "crt", "gcm", "rbpt", "rbpt2", "resit",
    "stfr", "Method", "TestOutcome", "ConditionalModel", "Dataset", "FittedModel",
    "IntegrationConfig", "make_factory", "RngStream",
]
