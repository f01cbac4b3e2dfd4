"""Mixed-variable benchmark problems and their evaluation metrics."""

from .encryption import Encryption, make_encryption
from .functions import (
    BENCHMARKS,
    DEFAULT_NOISE_VARIANCE,
    Amalgamated,
    Benchmark,
    Contamination,
    NKLandscape,
    Rastrigin,
    StyblinskiTang,
    ZDT6,
    make_benchmark,
)
from .metrics import add_observation_noise, normalized_reward, p_optimum

__all__ = [
    "BENCHMARKS",
    "DEFAULT_NOISE_VARIANCE",
    "Amalgamated",
    "Benchmark",
    "Contamination",
    "Encryption",
    "NKLandscape",
    "Rastrigin",
    "StyblinskiTang",
    "ZDT6",
    "add_observation_noise",
    "make_benchmark",
    "make_encryption",
    "normalized_reward",
    "p_optimum",
]
