"""Multi-objective hedging over a portfolio of acquisition functions.

Each epoch every acquisition nominates ``Q`` points. Past nominees are
re-scored with the current surrogate mean, rewards are min-max normalized per
objective over the whole history, summed into per-acquisition gains, and a
softmax over gains decides which acquisition supplies each batch slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import softmax

from .space import MixedSpace, MixedVector
from .surrogate import GpModel


@dataclass
class NomineeHistory:
    """``epochs[j][l][q]`` is the q-th nominee of acquisition l in epoch j."""

    epochs: list[list[list[MixedVector]]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for nominees in self.epochs:
            self._check(nominees)

    @property
    def shape(self) -> tuple[int, int, int]:
        if not self.epochs:
            return (0, 0, 0)
        return (len(self.epochs), len(self.epochs[0]), len(self.epochs[0][0]))

    def __len__(self) -> int:
        return len(self.epochs)

    def _check(self, nominees: Sequence[Sequence[MixedVector]]) -> None:
        L = len(nominees)
        Q = len(nominees[0]) if L else 0
        if L == 0 or Q == 0 or any(len(row) != Q for row in nominees):
            raise ValueError("nominees must form a non-empty L x Q rectangle")
        if self.epochs and (L, Q) != self.shape[1:]:
            raise ValueError(f"expected {self.shape[1:]} nominees, got {(L, Q)}")

    def append(self, nominees: Sequence[Sequence[MixedVector]]) -> None:
        self._check(nominees)
        self.epochs.append([list(row) for row in nominees])

    def to_array(self, space: MixedSpace) -> np.ndarray:
        """Encoded nominees, shape (epochs, L, Q, D)."""
        E, L, Q = self.shape
        flat = [w for epoch in self.epochs for row in epoch for w in row]
        return space.to_array(flat).reshape(E, L, Q, space.dim)

    def to_list(self) -> list:
        return [[[w.to_dict() for w in row] for row in epoch] for epoch in self.epochs]

    @classmethod
    def from_list(cls, doc: list) -> NomineeHistory:
        return cls([[[MixedVector.from_dict(w) for w in row] for row in epoch] for epoch in doc])


@dataclass
class HedgeState:
    eta: float
    gains: np.ndarray
    probabilities: np.ndarray


def compute_rewards(m: GpModel, h: NomineeHistory) -> np.ndarray:
    """Posterior mean of every historical nominee, shape (epochs, L, Q, K)."""
    E, L, Q = h.shape
    if E == 0:
        return np.zeros((0, 0, 0, m.n_objectives))
    X = h.to_array(m.space).reshape(-1, m.space.dim)
    mean, _ = m.predict_array(X)
    return mean.reshape(E, L, Q, m.n_objectives)


def normalize_gains(rewards: np.ndarray) -> np.ndarray:
    R = np.asarray(rewards, dtype=float)
    if R.ndim != 4 or R.size == 0:
        raise ValueError("rewards must be a non-empty (epochs, L, Q, K) tensor")
    lo = R.min(axis=(0, 1, 2))
    span = R.max(axis=(0, 1, 2)) - lo
    scaled = np.where(span > 0, (R - lo) / np.where(span > 0, span, 1.0), 0.0)
    return scaled.sum(axis=(0, 2))


def selection_probabilities(gains: np.ndarray, eta: float) -> np.ndarray:
    if eta <= 0:
        raise ValueError("eta must be positive")
    # scipy's softmax subtracts the max internally.
    return softmax(eta * np.asarray(gains, dtype=float).sum(axis=1))


def draw_sources(probs: np.ndarray, q_total: int, rng: np.random.Generator) -> np.ndarray:
    """Acquisition index for each of the ``q_total`` slots."""
    probs = np.asarray(probs, dtype=float)
    return rng.choice(len(probs), size=q_total, p=probs / probs.sum())


def select_batch(nominees: Sequence[Sequence[MixedVector]], probs: np.ndarray, q_total: int,
                 rng: np.random.Generator) -> list[MixedVector]:
    sources = draw_sources(probs, q_total, rng)
    return [nominees[l][q] for q, l in enumerate(sources)]


def hedge_state(m: GpModel | None, history: NomineeHistory, n_acquisitions: int,
                eta: float) -> HedgeState:
    """Gains and probabilities for the coming epoch (uniform without history)."""
    if len(history) == 0 or m is None:
        gains = np.zeros((n_acquisitions, m.n_objectives if m is not None else 1))
        return HedgeState(eta, gains, np.full(n_acquisitions, 1.0 / n_acquisitions))
    gains = normalize_gains(compute_rewards(m, history))
    return HedgeState(eta, gains, selection_probabilities(gains, eta))
