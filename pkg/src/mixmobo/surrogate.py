"""Multi-output Gaussian-process surrogate over mixed spaces.

A single GP with a squared-exponential kernel on the concatenated
Euclidean/Hamming distance vector is fitted to all ``K`` objectives at once:
one covariance factor, one posterior variance, ``K`` posterior means.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.linalg.lapack import dpotri

from .space import MixedSpace, MixedVector, distance_matrix_terms

logger = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
TINY = 1e-150


class FactorizationError(RuntimeError):
    """Covariance matrix stayed non positive definite after jittering."""


@dataclass(frozen=True)
class KernelHyperparams:
    lengthscales: tuple[float, ...]
    signal_amplitude: float = 1.0
    noise_variance: float = 0.0

    def __post_init__(self) -> None:
        ls = tuple(float(h) for h in self.lengthscales)
        if not ls or min(ls) <= 0:
            raise ValueError("lengthscales must be positive")
        if self.signal_amplitude <= 0:
            raise ValueError("signal amplitude must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_amplitude", float(self.signal_amplitude))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @classmethod
    def isotropic(cls, dim: int, lengthscale: float = 1.0, amplitude: float = 1.0,
                  noise: float = 0.0) -> KernelHyperparams:
        return cls((lengthscale,) * dim, amplitude, noise)

    def to_dict(self) -> dict:
        return {
            "lengthscales": list(self.lengthscales),
            "signal_amplitude": self.signal_amplitude,
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> KernelHyperparams:
        return cls(tuple(doc["lengthscales"]), doc["signal_amplitude"], doc["noise_variance"])


@dataclass
class Dataset:
    """Observed points and their objective values, ``objectives`` has shape (K, n)."""

    points: list[MixedVector]
    objectives: np.ndarray

    def __post_init__(self) -> None:
        obj = np.asarray(self.objectives, dtype=float)
        if obj.ndim == 1:
            obj = obj[None, :]
        if obj.ndim != 2 or obj.shape[1] != len(self.points):
            raise ValueError(
                f"objectives must have shape (K, {len(self.points)}), got {obj.shape}"
            )
        self.points = list(self.points)
        # a fixed memory layout keeps BLAS summation order, and so results, reproducible on reload
        self.objectives = np.array(obj, dtype=float, order="C")

    @classmethod
    def empty(cls, n_objectives: int) -> Dataset:
        return cls([], np.zeros((n_objectives, 0)))

    @property
    def n_objectives(self) -> int:
        return self.objectives.shape[0]

    def __len__(self) -> int:
        return len(self.points)

    def values(self) -> np.ndarray:
        """Objective values as an (n, K) array."""
        return self.objectives.T

    def extend(self, points: Sequence[MixedVector], values: np.ndarray) -> Dataset:
        values = np.asarray(values, dtype=float).reshape(len(points), -1)
        if values.shape[1] != self.n_objectives:
            raise ValueError(
                f"expected {self.n_objectives} objective values per point, got {values.shape[1]}"
            )
        return Dataset(self.points + list(points), np.hstack([self.objectives, values.T]))


# -- kernel -------------------------------------------------------------------


def _basis(FB: np.ndarray, space: MixedSpace, inv_sq: np.ndarray) -> tuple:
    """The right-hand side of dᵀ M d, reusable across many left-hand rows."""
    num = ~space.categorical_mask
    B = FB[:, num] * np.sqrt(inv_sq[num])
    OB = _one_hot(FB, space) if space.n_categorical else None
    return B, (B * B).sum(1), OB


def _squared_weighted_distance(FA: np.ndarray, basis: tuple, space: MixedSpace,
                               inv_sq: np.ndarray) -> np.ndarray:
    """dᵀ M d for all row pairs, with M = diag(inv_sq)."""
    B, b2, OB = basis
    cat = space.categorical_mask
    num = ~cat
    out = np.zeros((FA.shape[0], B.shape[0]))
    if num.any():
        A = FA[:, num] * np.sqrt(inv_sq[num])
        out += (A * A).sum(1)[:, None] + b2[None, :] - 2.0 * A @ B.T
        np.maximum(out, 0.0, out=out)
    if cat.any():
        out += inv_sq[cat].sum() - _one_hot(FA, space, inv_sq[cat]) @ OB.T
    return out


def _one_hot(F: np.ndarray, space: MixedSpace, weights: np.ndarray | None = None) -> np.ndarray:
    offset = space.n_continuous + space.n_ordinal
    sizes = np.asarray(space.categorical)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    O = np.zeros((F.shape[0], int(sizes.sum())))
    cols = starts[None, :] + F[:, offset:].astype(int)
    O[np.arange(F.shape[0])[:, None], cols] = 1.0 if weights is None else weights[None, :]
    return O


def _kernel_from_basis(FA: np.ndarray, basis: tuple, space: MixedSpace,
                       hp: KernelHyperparams) -> np.ndarray:
    inv_sq = 1.0 / np.square(hp.lengthscales)
    sq = _squared_weighted_distance(np.atleast_2d(FA), basis, space, inv_sq)
    return _flush_tiny(hp.signal_amplitude ** 2 * np.exp(-0.5 * np.minimum(sq, 800.0)))


def kernel_matrix(FA: np.ndarray, FB: np.ndarray, space: MixedSpace,
                  hp: KernelHyperparams) -> np.ndarray:
    inv_sq = 1.0 / np.square(hp.lengthscales)
    return _kernel_from_basis(FA, _basis(np.atleast_2d(FB), space, inv_sq), space, hp)


def _flush_tiny(A: np.ndarray) -> np.ndarray:
    # Subnormal floats (inputs or products) slow BLAS down by an order of magnitude.
    A[np.abs(A) < TINY] = 0.0
    return A


def kernel_eval(w: MixedVector, w2: MixedVector, s: MixedSpace, hp: KernelHyperparams) -> float:
    F = s.features(s.to_array([w, w2]))
    d = distance_matrix_terms(F[:1], F[1:], s.categorical_mask)[0, 0]
    inv_sq = 1.0 / np.square(hp.lengthscales)
    return float(hp.signal_amplitude ** 2 * np.exp(-0.5 * np.dot(d * d, inv_sq)))


def _factorize(C: np.ndarray) -> np.ndarray:
    n = C.shape[0]
    for jitter in JITTER_LADDER:
        try:
            A = C + jitter * np.eye(n) if jitter else C
            return cholesky(A, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(f"covariance of size {n} is not positive definite")


def _standardize(Y: np.ndarray, enabled: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not enabled:
        return Y, np.zeros(Y.shape[1]), np.ones(Y.shape[1])
    mean = Y.mean(axis=0)
    scale = Y.std(axis=0)
    scale[scale <= 0] = 1.0
    return (Y - mean) / scale, mean, scale


# -- model ------------------------------------------------------------------------


@dataclass
class GpModel:
    """A fitted surrogate.

    Means are reported in the original objective units. The posterior
    variance is shared by all objectives and lives on the standardized
    (kernel) scale, i.e. it is bounded by ``signal_amplitude**2``.
    """

    space: MixedSpace
    hyperparams: KernelHyperparams
    dataset: Dataset
    L: np.ndarray
    alpha: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray
    _F: np.ndarray = field(repr=False)
    _L_inv: np.ndarray = field(init=False, repr=False)
    _train_basis: tuple = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._L_inv = _flush_tiny(
            solve_triangular(self.L, np.eye(len(self.L)), lower=True, check_finite=False))
        inv_sq = 1.0 / np.square(self.hyperparams.lengthscales)
        self._train_basis = _basis(self._F, self.space, inv_sq)

    @property
    def n_objectives(self) -> int:
        return self.alpha.shape[1]

    @property
    def incumbents(self) -> np.ndarray:
        """Best observed value per objective on the standardized scale."""
        return ((self.dataset.values() - self.y_mean) / self.y_scale).max(axis=0)

    def predict_latent(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Standardized means (n, K) and shared variances (n,) for encoded rows."""
        Fs = self.space.features(X)
        Ks = _kernel_from_basis(Fs, self._train_basis, self.space, self.hyperparams)
        mean = Ks @ self.alpha
        v = self._L_inv @ Ks.T
        var = self.hyperparams.signal_amplitude ** 2 - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)

    def predict_array(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mean, var = self.predict_latent(X)
        return mean * self.y_scale + self.y_mean, var

    def predict(self, points: Sequence[MixedVector]) -> tuple[np.ndarray, np.ndarray]:
        return self.predict_array(self.space.to_array(points))


def fit_gp(d: Dataset, s: MixedSpace, hp: KernelHyperparams, standardize: bool = True) -> GpModel:
    if len(d) < 1:
        raise ValueError("cannot fit a GP to an empty dataset")
    if len(hp.lengthscales) != s.dim:
        raise ValueError(f"need {s.dim} lengthscales, got {len(hp.lengthscales)}")
    F = s.features(s.to_array(d.points))
    C = kernel_matrix(F, F, s, hp)
    C[np.diag_indices_from(C)] += hp.noise_variance
    L = _factorize(C)
    Y, mean, scale = _standardize(d.values(), standardize)
    alpha = solve_triangular(L.T, solve_triangular(L, Y, lower=True, check_finite=False),
                             lower=False, check_finite=False)
    return GpModel(s, hp, d, L, alpha, mean, scale, F)


def gp_predict(m: GpModel, w: MixedVector) -> tuple[np.ndarray, float]:
    mean, var = m.predict([w])
    return mean[0], float(var[0])


# -- LOOCV ----------------------------------------------------------------------------


def squared_distance_tensor(F: np.ndarray, space: MixedSpace) -> np.ndarray:
    """Per-dimension squared distances, shape (n*n, D), reused across candidates."""
    d = distance_matrix_terms(F, F, space.categorical_mask)
    return (d * d).reshape(-1, F.shape[1])


def _loocv_from_tensor(D2: np.ndarray, n: int, Y: np.ndarray, hp: KernelHyperparams) -> float:
    inv_sq = 1.0 / np.square(hp.lengthscales)
    C = _flush_tiny(hp.signal_amplitude ** 2 * np.exp(-0.5 * np.minimum(D2 @ inv_sq, 800.0)).reshape(n, n))
    C[np.diag_indices(n)] += hp.noise_variance
    L = _factorize(C)
    Cinv, info = dpotri(L, lower=1)
    if info != 0:
        raise FactorizationError(f"dpotri failed with info={info}")
    Cinv = np.tril(Cinv) + np.tril(Cinv, -1).T
    alpha = Cinv @ Y
    resid = alpha / np.diag(Cinv)[:, None]
    return float(np.mean(resid ** 2))


def loocv_score(d: Dataset, s: MixedSpace, hp: KernelHyperparams, standardize: bool = True) -> float:
    """Mean squared leave-one-out error over points and objectives.

    Uses the closed-form identity ``y_i - mu_{-i} = [C^-1 y]_i / [C^-1]_ii``.
    With ``standardize`` the targets are standardized once with full-data
    statistics, so the score is on that fixed scale.
    """
    if len(d) < 2:
        raise ValueError("LOOCV needs at least two points")
    F = s.features(s.to_array(d.points))
    Y, _, _ = _standardize(d.values(), standardize)
    return _loocv_from_tensor(squared_distance_tensor(F, s), len(d), Y, hp)


@dataclass(frozen=True)
class HyperparamSearch:
    """Budgeted log-uniform random search over kernel hyperparameters."""

    n_candidates: int = 64
    lengthscale_bounds: tuple[float, float] = (1e-2, 1e1)
    amplitude_bounds: tuple[float, float] = (1e-1, 1e1)
    noise_bounds: tuple[float, float] = (1e-6, 1e-1)

    def __post_init__(self) -> None:
        if self.n_candidates < 1:
            raise ValueError("search budget must be >= 1")
        for lo, hi in (self.lengthscale_bounds, self.amplitude_bounds, self.noise_bounds):
            if not 0 < lo <= hi:
                raise ValueError(f"invalid log-uniform bounds ({lo}, {hi})")

    def default(self, dim: int) -> KernelHyperparams:
        mid = lambda b: float(np.sqrt(b[0] * b[1]))  # noqa: E731
        return KernelHyperparams((mid(self.lengthscale_bounds),) * dim,
                                 mid(self.amplitude_bounds), mid(self.noise_bounds))

    def sample(self, dim: int, rng: np.random.Generator) -> KernelHyperparams:
        def logu(b, size=None):
            return np.exp(rng.uniform(np.log(b[0]), np.log(b[1]), size))

        ls = logu(self.lengthscale_bounds, dim)
        return KernelHyperparams(tuple(ls.tolist()), float(logu(self.amplitude_bounds)),
                                 float(logu(self.noise_bounds)))


def fit_hyperparams(d: Dataset, s: MixedSpace, search: HyperparamSearch,
                    rng: np.random.Generator, standardize: bool = True,
                    extra_candidates: Sequence[KernelHyperparams] = ()) -> KernelHyperparams:
    """Pick the LOOCV-minimizing candidate of a seeded random search.

    ``extra_candidates`` (for example last epoch's winner) are scored before
    the random draws and count on top of the budget.
    """
    if len(d) < 2:
        raise ValueError("hyperparameter fitting needs at least two points")
    F = s.features(s.to_array(d.points))
    D2 = squared_distance_tensor(F, s)
    Y, _, _ = _standardize(d.values(), standardize)
    candidates = list(extra_candidates)
    candidates += [search.sample(s.dim, rng) for _ in range(search.n_candidates)]
    best, best_score = None, np.inf
    for hp in candidates:
        try:
            score = _loocv_from_tensor(D2, len(d), Y, hp)
        except FactorizationError:
            continue
        if np.isfinite(score) and score < best_score:
            best, best_score = hp, score
    if best is None:
        logger.warning("every hyperparameter candidate failed; using mid-range defaults")
        return search.default(s.dim)
    return best
