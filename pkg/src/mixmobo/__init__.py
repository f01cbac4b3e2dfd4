"""Bayesian optimization for multi-objective problems over mixed variables."""

from .acquisition import AcquisitionKind, AcquisitionParams
from .moga import GaConfig
from .optimizer import (
    MixMOBO,
    OptimizerConfig,
    OptimizerState,
    ParetoSet,
    ask,
    extract_pareto_set,
    run_epoch,
    tell,
)
from .space import MixedSpace, MixedVector
from .surrogate import Dataset, GpModel, HyperparamSearch, KernelHyperparams

__version__ = "0.1.0"

__all__ = [
    "AcquisitionKind",
    "AcquisitionParams",
    "Dataset",
    "GaConfig",
    "GpModel",
    "HyperparamSearch",
    "KernelHyperparams",
    "MixMOBO",
    "MixedSpace",
    "MixedVector",
    "OptimizerConfig",
    "OptimizerState",
    "ParetoSet",
    "ask",
    "extract_pareto_set",
    "run_epoch",
    "tell",
]
