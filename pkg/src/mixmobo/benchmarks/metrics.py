"""Benchmark noise and scoring metrics."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..space import MixedVector


def add_observation_noise(values, variance: float, rng: np.random.Generator,
                          scale=1.0) -> np.ndarray:
    """Gaussian noise of ``variance`` in units of ``scale`` (per objective)."""
    if variance < 0:
        raise ValueError("noise variance must be non-negative")
    values = np.asarray(values, dtype=float)
    if variance == 0:
        return values.copy()
    return values + np.asarray(scale, dtype=float) * rng.normal(0.0, np.sqrt(variance), size=values.shape)


def normalized_reward(current_best: float, random_best: float, global_best: float) -> float:
    denom = global_best - random_best
    if denom == 0:
        raise ZeroDivisionError("global optimum equals the random-sampling optimum")
    return (current_best - random_best) / denom


def _categorical_rows(points) -> np.ndarray:
    rows = [p.categorical if isinstance(p, MixedVector) else p for p in points]
    return np.atleast_2d(np.asarray(rows, dtype=int))


def p_optimum(current_pareto: Sequence, global_pareto: Sequence) -> float:
    """Mean over global Pareto points of exp(-min Hamming distance to the found set)."""
    G = _categorical_rows(global_pareto)
    if len(global_pareto) == 0:
        raise ValueError("global Pareto set must be non-empty")
    if len(current_pareto) == 0:
        return 0.0
    C = _categorical_rows(current_pareto)
    ham = (G[:, None, :] != C[None, :, :]).sum(axis=-1)
    return float(np.mean(np.exp(-ham.min(axis=1))))
