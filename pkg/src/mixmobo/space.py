"""Mixed continuous / ordinal / categorical design spaces.

Points are :class:`MixedVector` values at the public API. Internally the
optimizer works on float arrays laid out as ``[continuous values, ordinal
indices, categorical indices]`` (see :meth:`MixedSpace.to_array`), which keeps
the GA and the kernel vectorized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class MixedVector:
    """One design point.

    Ordinal and categorical components are stored as indices; the real value
    of an ordinal gene is looked up in :attr:`MixedSpace.ordinal`.
    """

    continuous: tuple[float, ...] = ()
    ordinal: tuple[int, ...] = ()
    categorical: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "continuous", tuple(float(v) for v in self.continuous))
        object.__setattr__(self, "ordinal", tuple(int(v) for v in self.ordinal))
        object.__setattr__(self, "categorical", tuple(int(v) for v in self.categorical))

    def to_dict(self) -> dict[str, list]:
        return {
            "continuous": list(self.continuous),
            "ordinal": list(self.ordinal),
            "categorical": list(self.categorical),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> MixedVector:
        return cls(
            tuple(doc.get("continuous", ())),
            tuple(doc.get("ordinal", ())),
            tuple(doc.get("categorical", ())),
        )


@dataclass(frozen=True)
class MixedSpace:
    """Schema of a mixed design space.

    Parameters
    ----------
    continuous : sequence of (lower, upper)
        Closed bounds of each continuous dimension.
    ordinal : sequence of level lists
        Strictly increasing real levels of each ordinal dimension.
    categorical : sequence of int
        Number of categories of each categorical dimension.
    """

    continuous: tuple[tuple[float, float], ...] = ()
    ordinal: tuple[tuple[float, ...], ...] = ()
    categorical: tuple[int, ...] = ()
    _lo: np.ndarray = field(init=False, repr=False, compare=False)
    _hi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        cont = tuple((float(lo), float(hi)) for lo, hi in self.continuous)
        ords = tuple(tuple(float(v) for v in levels) for levels in self.ordinal)
        cats = tuple(int(c) for c in self.categorical)
        for lo, hi in cont:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"continuous bounds must satisfy lower < upper, got ({lo}, {hi})")
        for levels in ords:
            if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
                raise ValueError(f"ordinal levels must be >= 2 strictly increasing values, got {levels}")
        for c in cats:
            if c < 2:
                raise ValueError(f"categorical cardinality must be >= 2, got {c}")
        if len(cont) + len(ords) + len(cats) < 1:
            raise ValueError("space must have at least one dimension")
        object.__setattr__(self, "continuous", cont)
        object.__setattr__(self, "ordinal", ords)
        object.__setattr__(self, "categorical", cats)
        # Upper index bound per column of the array encoding.
        lo = [b[0] for b in cont] + [0.0] * (len(ords) + len(cats))
        hi = [b[1] for b in cont] + [len(l) - 1 for l in ords] + [c - 1 for c in cats]
        object.__setattr__(self, "_lo", np.asarray(lo, dtype=float))
        object.__setattr__(self, "_hi", np.asarray(hi, dtype=float))

    @property
    def n_continuous(self) -> int:
        return len(self.continuous)

    @property
    def n_ordinal(self) -> int:
        return len(self.ordinal)

    @property
    def n_categorical(self) -> int:
        return len(self.categorical)

    @property
    def dim(self) -> int:
        return self.n_continuous + self.n_ordinal + self.n_categorical

    @property
    def categorical_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        mask[self.n_continuous + self.n_ordinal:] = True
        return mask

    @property
    def continuous_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        mask[: self.n_continuous] = True
        return mask

    def size(self) -> float:
        """Number of points if fully discrete, ``inf`` otherwise."""
        if self.n_continuous:
            return math.inf
        return float(math.prod(len(l) for l in self.ordinal) * math.prod(self.categorical))

    # -- array encoding -------------------------------------------------

    def to_array(self, points: MixedVector | Iterable[MixedVector]) -> np.ndarray:
        if isinstance(points, MixedVector):
            return self.to_array([points])[0]
        rows = [list(p.continuous) + list(p.ordinal) + list(p.categorical) for p in points]
        return np.asarray(rows, dtype=float).reshape(len(rows), self.dim)

    def from_array(self, row: Sequence[float]) -> MixedVector:
        row = np.asarray(row, dtype=float)
        m, n = self.n_continuous, self.n_ordinal
        return MixedVector(
            tuple(row[:m].tolist()),
            tuple(int(round(v)) for v in row[m:m + n]),
            tuple(int(round(v)) for v in row[m + n:]),
        )

    def points_from_array(self, X: np.ndarray) -> list[MixedVector]:
        return [self.from_array(row) for row in np.atleast_2d(X)]

    def features(self, X: np.ndarray) -> np.ndarray:
        """Map encoded rows to distance features.

        Continuous values and ordinal level values are min-max scaled to
        [0, 1]; categorical columns keep their raw indices (compared by
        equality only).
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        F = X.copy()
        m, n = self.n_continuous, self.n_ordinal
        if m:
            F[:, :m] = (X[:, :m] - self._lo[:m]) / (self._hi[:m] - self._lo[:m])
        for j, levels in enumerate(self.ordinal):
            lv = np.asarray(levels)
            idx = X[:, m + j].astype(int)
            F[:, m + j] = (lv[idx] - lv[0]) / (lv[-1] - lv[0])
        return F

    def ordinal_values(self, w: MixedVector) -> tuple[float, ...]:
        return tuple(self.ordinal[j][i] for j, i in enumerate(w.ordinal))

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict[str, list]:
        return {
            "continuous": [list(b) for b in self.continuous],
            "ordinal": [list(l) for l in self.ordinal],
            "categorical": list(self.categorical),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> MixedSpace:
        unknown = set(doc) - {"continuous", "ordinal", "categorical"}
        if unknown:
            raise ValueError(f"unknown space keys: {sorted(unknown)}")
        return cls(
            tuple(tuple(b) for b in doc.get("continuous", ())),
            tuple(tuple(l) for l in doc.get("ordinal", ())),
            tuple(doc.get("categorical", ())),
        )


def validate_point(w: MixedVector, s: MixedSpace) -> bool:
    if (len(w.continuous), len(w.ordinal), len(w.categorical)) != (
        s.n_continuous, s.n_ordinal, s.n_categorical,
    ):
        return False
    for v, (lo, hi) in zip(w.continuous, s.continuous):
        if not (lo <= v <= hi):
            return False
    for i, levels in zip(w.ordinal, s.ordinal):
        if not 0 <= i < len(levels):
            return False
    for i, c in zip(w.categorical, s.categorical):
        if not 0 <= i < c:
            return False
    return True


def sample_array(s: MixedSpace, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` uniform points in array encoding."""
    X = np.empty((size, s.dim))
    m = s.n_continuous
    if m:
        X[:, :m] = s._lo[:m] + rng.random((size, m)) * (s._hi[:m] - s._lo[:m])
    if s.dim > m:
        X[:, m:] = rng.integers(0, s._hi[m:].astype(int) + 1, size=(size, s.dim - m))
    return X


def sample_uniform(s: MixedSpace, rng: np.random.Generator) -> MixedVector:
    return s.from_array(sample_array(s, rng, 1)[0])


def mutate_array(X: np.ndarray, s: MixedSpace, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Resample each gene of each row independently with probability ``beta``."""
    X = np.atleast_2d(np.array(X, dtype=float))
    mask = rng.random(X.shape) < beta
    fresh = sample_array(s, rng, X.shape[0])
    return np.where(mask, fresh, X)


def mutate_point(w: MixedVector, s: MixedSpace, beta: float, rng: np.random.Generator) -> MixedVector:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"mutation rate must lie in [0, 1], got {beta}")
    return s.from_array(mutate_array(s.to_array(w)[None, :], s, beta, rng)[0])


def distance_matrix_terms(FA: np.ndarray, FB: np.ndarray, cat_mask: np.ndarray) -> np.ndarray:
    """Per-dimension absolute distances between feature rows, shape (a, b, D)."""
    diff = np.abs(FA[:, None, :] - FB[None, :, :])
    if cat_mask.any():
        diff[..., cat_mask] = (diff[..., cat_mask] != 0).astype(float)
    return diff


def mixed_distance_vector(w: MixedVector, w2: MixedVector, s: MixedSpace) -> np.ndarray:
    F = s.features(s.to_array([w, w2]))
    return distance_matrix_terms(F[:1], F[1:], s.categorical_mask)[0, 0]


def l2_distance(w: MixedVector, w2: MixedVector, s: MixedSpace) -> float:
    return float(np.linalg.norm(mixed_distance_vector(w, w2, s)))


def pairwise_l2(FA: np.ndarray, FB: np.ndarray, cat_mask: np.ndarray) -> np.ndarray:
    return np.sqrt((distance_matrix_terms(FA, FB, cat_mask) ** 2).sum(axis=-1))
