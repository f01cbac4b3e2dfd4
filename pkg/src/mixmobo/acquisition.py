"""Per-objective acquisition functions (maximization convention).

Every function returns one value per objective so the multi-objective GA can
trade them off. Values are computed on the surrogate's standardized scale,
where the shared posterior standard deviation is meaningful for all
objectives at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .space import MixedVector
from .surrogate import GpModel

_SQRT_2PI_INV = 1.0 / np.sqrt(2.0 * np.pi)


class AcquisitionKind(str, enum.Enum):
    EI = "EI"
    PI = "PI"
    UCB = "UCB"
    SMC = "SMC"

    @classmethod
    def parse(cls, name: str | AcquisitionKind) -> AcquisitionKind:
        try:
            return cls(str(getattr(name, "value", name)).upper())
        except ValueError:
            raise ValueError(f"unknown acquisition {name!r}; choose from "
                             f"{[k.value for k in cls]}") from None

    @property
    def stochastic(self) -> bool:
        return self is AcquisitionKind.SMC


def check_portfolio(kinds: Sequence[AcquisitionKind | str]) -> tuple[AcquisitionKind, ...]:
    parsed = tuple(AcquisitionKind.parse(k) for k in kinds)
    if not parsed:
        raise ValueError("acquisition portfolio must not be empty")
    if AcquisitionKind.UCB not in parsed:
        raise ValueError("acquisition portfolio must contain UCB")
    if len(set(parsed)) != len(parsed):
        raise ValueError(f"duplicate acquisitions in portfolio {parsed}")
    return parsed


@dataclass(frozen=True)
class AcquisitionParams:
    """Acquisition settings.

    ``incumbents`` are per-objective best values on the model's standardized
    scale; ``None`` means "take them from the model's training data".
    """

    ucb_kappa: float = 2.0
    xi: float = 0.01
    incumbents: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.ucb_kappa <= 0:
            raise ValueError("ucb_kappa must be positive")
        if self.xi < 0:
            raise ValueError("xi must be non-negative")

    def incumbents_for(self, model: GpModel) -> np.ndarray:
        if self.incumbents is None:
            return model.incumbents
        inc = np.asarray(self.incumbents, dtype=float)
        if inc.shape != (model.n_objectives,):
            raise ValueError(f"need {model.n_objectives} incumbents, got {inc.shape}")
        return inc


# -- closed forms on (mu, sigma) ------------------------------------------------


def _improvement(mu, sigma, incumbents, xi):
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    sigma = np.asarray(sigma, dtype=float).reshape(-1, 1)
    return mu - np.asarray(incumbents, dtype=float) - xi, sigma


def expected_improvement(mu, sigma, incumbents, xi: float = 0.0) -> np.ndarray:
    imp, sigma = _improvement(mu, sigma, incumbents, xi)
    pos = sigma > 0
    safe = np.where(pos, sigma, 1.0)
    with np.errstate(over="ignore"):
        z = imp / safe
        ei = imp * ndtr(z) + safe * _SQRT_2PI_INV * np.exp(-0.5 * z * z)
    return np.where(pos, np.maximum(ei, 0.0), np.maximum(imp, 0.0))


def probability_of_improvement(mu, sigma, incumbents, xi: float = 0.0) -> np.ndarray:
    imp, sigma = _improvement(mu, sigma, incumbents, xi)
    pos = sigma > 0
    with np.errstate(over="ignore"):
        z = imp / np.where(pos, sigma, 1.0)
    return np.where(pos, ndtr(z), (imp > 0).astype(float))


def upper_confidence_bound(mu, sigma, kappa: float) -> np.ndarray:
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    return mu + kappa * np.asarray(sigma, dtype=float).reshape(-1, 1)


def stochastic_monte_carlo(mu, sigma, rng: np.random.Generator) -> np.ndarray:
    """mu + r with r ~ U(0, 2 sigma), one r per row shared by all objectives."""
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    sigma = np.asarray(sigma, dtype=float).reshape(-1, 1)
    r = rng.random((mu.shape[0], 1)) * 2.0 * sigma
    return mu + r


# -- model-backed evaluation -------------------------------------------------


def evaluate_array(kind: AcquisitionKind, model: GpModel, X: np.ndarray,
                   params: AcquisitionParams, rng: np.random.Generator | None = None) -> np.ndarray:
    """Acquisition values of shape (n, K) for encoded rows ``X``."""
    mu, var = model.predict_latent(np.atleast_2d(X))
    sigma = np.sqrt(var)
    if kind is AcquisitionKind.EI:
        return expected_improvement(mu, sigma, params.incumbents_for(model), params.xi)
    if kind is AcquisitionKind.PI:
        return probability_of_improvement(mu, sigma, params.incumbents_for(model), params.xi)
    if kind is AcquisitionKind.UCB:
        return upper_confidence_bound(mu, sigma, params.ucb_kappa)
    if kind is AcquisitionKind.SMC:
        if rng is None:
            raise ValueError("SMC needs a random generator")
        return stochastic_monte_carlo(mu, sigma, rng)
    raise ValueError(f"unsupported acquisition {kind}")


def _one(kind, m: GpModel, w: MixedVector, p: AcquisitionParams, rng=None) -> np.ndarray:
    return evaluate_array(kind, m, m.space.to_array([w]), p, rng)[0]


def acq_ei(m: GpModel, w: MixedVector, p: AcquisitionParams) -> np.ndarray:
    return _one(AcquisitionKind.EI, m, w, p)


def acq_pi(m: GpModel, w: MixedVector, p: AcquisitionParams) -> np.ndarray:
    return _one(AcquisitionKind.PI, m, w, p)


def acq_ucb(m: GpModel, w: MixedVector, p: AcquisitionParams) -> np.ndarray:
    return _one(AcquisitionKind.UCB, m, w, p)


def acq_smc(m: GpModel, w: MixedVector, rng: np.random.Generator) -> np.ndarray:
    return _one(AcquisitionKind.SMC, m, w, AcquisitionParams(), rng)
