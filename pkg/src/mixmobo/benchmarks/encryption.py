"""Seeded scrambling of categorical indices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..space import MixedSpace, MixedVector


@dataclass(frozen=True)
class Encryption:
    """One permutation per categorical dimension.

    ``apply`` maps the index the optimizer sees to the underlying level index.
    """

    permutations: tuple[tuple[int, ...], ...]
    seed: int | None = None

    def __post_init__(self) -> None:
        perms = tuple(tuple(int(v) for v in p) for p in self.permutations)
        for p in perms:
            if sorted(p) != list(range(len(p))):
                raise ValueError(f"not a permutation: {p}")
        object.__setattr__(self, "permutations", perms)

    @classmethod
    def identity(cls, s: MixedSpace) -> Encryption:
        return cls(tuple(tuple(range(c)) for c in s.categorical))

    @property
    def inverse(self) -> Encryption:
        return Encryption(tuple(tuple(np.argsort(p).tolist()) for p in self.permutations), self.seed)

    def apply(self, w: MixedVector) -> MixedVector:
        cats = tuple(p[i] for p, i in zip(self.permutations, w.categorical))
        return MixedVector(w.continuous, w.ordinal, cats)

    def apply_inverse(self, w: MixedVector) -> MixedVector:
        return self.inverse.apply(w)

    def apply_array(self, C: np.ndarray) -> np.ndarray:
        """Map an (n, n_categorical) index array."""
        C = np.asarray(C).astype(int)
        out = np.empty_like(C)
        for j, p in enumerate(self.permutations):
            out[:, j] = np.asarray(p)[C[:, j]]
        return out


def make_encryption(s: MixedSpace, seed: int | None) -> Encryption:
    """Random permutations from ``seed``; ``None`` gives the identity."""
    if seed is None:
        return Encryption.identity(s)
    rng = np.random.default_rng(seed)
    return Encryption(tuple(tuple(rng.permutation(c).tolist()) for c in s.categorical), seed)
