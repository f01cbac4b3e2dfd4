"""NSGA-II style genetic optimizer for vector-valued acquisitions on mixed spaces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .acquisition import AcquisitionKind, AcquisitionParams, evaluate_array
from .space import MixedSpace, MixedVector, mutate_array, sample_array
from .surrogate import GpModel


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 100
    generations: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float | None = None  # None -> 1 / dim
    tournament_size: int = 2

    def __post_init__(self) -> None:
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population_size must be even and >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must lie in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.tournament_size < 2:
            raise ValueError("tournament_size must be >= 2")

    def gene_mutation_rate(self, space: MixedSpace) -> float:
        return 1.0 / space.dim if self.mutation_rate is None else self.mutation_rate


@dataclass
class RankedPopulation:
    """Final GA population sorted by front rank, then descending crowding."""

    space: MixedSpace
    X: np.ndarray
    values: np.ndarray
    rank: np.ndarray
    crowding: np.ndarray
    best_history: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def individuals(self) -> list[tuple[MixedVector, np.ndarray, int, float]]:
        return [(self.space.from_array(x), v, int(r), float(c))
                for x, v, r, c in zip(self.X, self.values, self.rank, self.crowding)]


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Maximization dominance: ``a >= b`` everywhere and ``a != b``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("dominance needs vectors of equal length")
    return bool(np.all(a >= b) and np.any(a > b))


def dominance_matrix(V: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is True iff row i dominates row j."""
    ge = (V[:, None, :] >= V[None, :, :]).all(-1)
    gt = (V[:, None, :] > V[None, :, :]).any(-1)
    return ge & gt


def _single_objective_fronts(v: np.ndarray) -> list[list[int]]:
    levels, inverse = np.unique(-v, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(levels) + 1))
    return [order[a:b].tolist() for a, b in zip(bounds[:-1], bounds[1:])]


def non_dominated_sort(values) -> list[list[int]]:
    V = np.atleast_2d(np.asarray(values, dtype=float))
    if V.shape[0] == 0:
        raise ValueError("cannot sort an empty population")
    if V.shape[1] == 1:
        return _single_objective_fronts(V[:, 0])
    dom = dominance_matrix(V)
    count = dom.sum(axis=0)
    remaining = np.ones(len(V), dtype=bool)
    fronts = []
    while remaining.any():
        front = np.flatnonzero(remaining & (count == 0))
        fronts.append(front.tolist())
        remaining[front] = False
        count = count - dom[front].sum(axis=0)
    return fronts


def crowding_distance(front_values) -> np.ndarray:
    F = np.atleast_2d(np.asarray(front_values, dtype=float))
    n, K = F.shape
    if n <= 2:
        return np.full(n, np.inf)
    dist = np.zeros(n)
    for k in range(K):
        order = np.argsort(F[:, k], kind="stable")
        lo, hi = F[order[0], k], F[order[-1], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi <= lo:
            continue
        dist[order[1:-1]] += (F[order[2:], k] - F[order[:-2], k]) / (hi - lo)
    return dist


def rank_and_crowd(V: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sort order (rank asc, crowding desc) plus 1-based ranks and crowding."""
    if V.shape[1] == 1:
        return _rank_single(V[:, 0])
    rank = np.empty(len(V), dtype=int)
    crowd = np.empty(len(V))
    order = []
    for r, front in enumerate(non_dominated_sort(V), start=1):
        front = np.asarray(front)
        cd = crowding_distance(V[front])
        rank[front] = r
        crowd[front] = cd
        order.extend(front[np.argsort(-cd, kind="stable")].tolist())
    return np.asarray(order, dtype=int), rank, crowd


def _rank_single(v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Each front is a set of tied values: boundaries are infinite, the rest 0.
    n = len(v)
    idx = np.argsort(-v, kind="stable")
    sv = v[idx]
    first = np.empty(n, dtype=bool)
    first[0] = True
    first[1:] = sv[1:] != sv[:-1]
    last = np.append(first[1:], True)
    group = np.cumsum(first) - 1
    size = np.diff(np.append(np.flatnonzero(first), n))[group]
    boundary = (size <= 2) | first | last
    rank = np.empty(n, dtype=int)
    crowd = np.empty(n)
    rank[idx] = group + 1
    crowd[idx] = np.where(boundary, np.inf, 0.0)
    # within a front: its two boundary members, then the interior, each in index order
    order = idx[np.lexsort((~boundary, group))]
    return order, rank, crowd


def _first_unique_rows(X: np.ndarray) -> np.ndarray:
    # Rows as opaque byte strings: much faster than np.unique(axis=0). Adding 0.0 folds -0.0 into 0.0.
    Xc = np.ascontiguousarray(X + 0.0)
    keys = Xc.view(np.dtype((np.void, Xc.dtype.itemsize * Xc.shape[1]))).ravel()
    return np.unique(keys, return_index=True)[1]


def _survivors(X: np.ndarray, V: np.ndarray, n: int) -> np.ndarray:
    # Unique individuals are ranked first; exact duplicates only fill leftover slots.
    uniq = np.sort(_first_unique_rows(X))
    order, _, _ = rank_and_crowd(V[uniq])
    chosen = uniq[order]
    if len(chosen) < n:
        dups = np.setdiff1d(np.arange(len(X)), uniq)
        chosen = np.concatenate([chosen, dups])
    return chosen[:n]


def _crossover(A: np.ndarray, B: np.ndarray, space: MixedSpace, rate: float,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n, D = A.shape
    do = rng.random(n) < rate
    swap = (rng.random((n, D)) < 0.5) & do[:, None]
    C1, C2 = np.where(swap, B, A), np.where(swap, A, B)
    cont = space.continuous_mask
    if cont.any():
        blend = (rng.random((n, D)) < 0.5) & do[:, None] & cont[None, :]
        lam = rng.random((n, D))
        C1 = np.where(blend, lam * A + (1 - lam) * B, C1)
        C2 = np.where(blend, (1 - lam) * A + lam * B, C2)
    return C1, C2


def run_ga(fitness: Callable[[np.ndarray], np.ndarray], space: MixedSpace, cfg: GaConfig,
           rng: np.random.Generator, initial: np.ndarray | None = None,
           stochastic: bool = False) -> RankedPopulation:
    """Maximize a vector-valued ``fitness`` over encoded rows of ``space``.

    ``fitness`` maps an (n, D) array to an (n, K) array. With ``stochastic``
    the surviving parents are re-scored every generation.
    """
    N = cfg.population_size
    P = sample_array(space, rng, N)
    if initial is not None and len(initial):
        seeds = np.atleast_2d(initial)[: N // 2]
        P[: len(seeds)] = seeds
    VP = np.atleast_2d(fitness(P))
    order, _, _ = rank_and_crowd(VP)
    P, VP = P[order], VP[order]
    beta = cfg.gene_mutation_rate(space)
    history = [VP.max(axis=0)]
    for _ in range(cfg.generations):
        # P is sorted best-first, so the tournament winner is the lowest position.
        picks = rng.integers(0, N, size=(N, cfg.tournament_size)).min(axis=1)
        A, B = P[picks[0::2]], P[picks[1::2]]
        C1, C2 = _crossover(A, B, space, cfg.crossover_rate, rng)
        O = mutate_array(np.vstack([C1, C2]), space, beta, rng)
        VO = np.atleast_2d(fitness(O))
        if stochastic:
            VP = np.atleast_2d(fitness(P))
        X, V = np.vstack([P, O]), np.vstack([VP, VO])
        keep = _survivors(X, V, N)
        P, VP = X[keep], V[keep]
        history.append(VP.max(axis=0))
    order, rank, crowd = rank_and_crowd(VP)
    return RankedPopulation(space, P[order], VP[order], rank[order], crowd[order], history)


def optimize_acquisition(m: GpModel, kind: AcquisitionKind, p: AcquisitionParams, s: MixedSpace,
                         q: int, cfg: GaConfig, rng: np.random.Generator,
                         initial: np.ndarray | None = None) -> list[MixedVector]:
    """Top ``q`` individuals of a GA run on the acquisition surface."""
    return s.points_from_array(optimize_acquisition_array(m, kind, p, s, q, cfg, rng, initial))


def optimize_acquisition_array(m: GpModel, kind: AcquisitionKind, p: AcquisitionParams,
                               s: MixedSpace, q: int, cfg: GaConfig, rng: np.random.Generator,
                               initial: np.ndarray | None = None) -> np.ndarray:
    if not 1 <= q <= cfg.population_size:
        raise ValueError(f"batch size {q} must lie in [1, population_size]")
    kind = AcquisitionKind.parse(kind)
    pop = run_ga(lambda X: evaluate_array(kind, m, X, p, rng), s, cfg, rng,
                 initial=initial, stochastic=kind.stochastic)
    return pop.X[:q]
