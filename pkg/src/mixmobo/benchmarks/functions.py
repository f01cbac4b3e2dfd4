"""Mixed-variable test problems, all posed as maximization."""

from __future__ import annotations

import itertools
import json
import math
import os
from functools import cached_property
from pathlib import Path

import numpy as np

from ..moga import dominance_matrix
from ..space import MixedSpace, MixedVector, sample_array
from .encryption import Encryption, make_encryption
from .metrics import add_observation_noise

DEFAULT_NOISE_VARIANCE = 0.005
SCALE_SAMPLES = 10_000
SCALE_STREAM = 7


def cache_dir() -> Path:
    return Path(os.environ.get("MIXMOBO_CACHE_DIR", Path.home() / ".cache" / "mixmobo"))


class Benchmark:
    """Base class: a space, a noiseless objective and its known optimum."""

    name: str = ""
    n_objectives: int = 1

    def __init__(self, space: MixedSpace, seed: int = 0,
                 noise_variance: float = DEFAULT_NOISE_VARIANCE,
                 encryption: Encryption | None = None):
        self.space = space
        self.seed = seed
        self.noise_variance = noise_variance
        self.encryption = encryption or Encryption.identity(space)

    def evaluate_array(self, X: np.ndarray) -> np.ndarray:
        """Noiseless objective values, (n, K), for encoded rows."""
        raise NotImplementedError

    def evaluate(self, w: MixedVector) -> np.ndarray:
        return self.evaluate_array(self.space.to_array([w]))[0]

    def __call__(self, w: MixedVector) -> np.ndarray:
        return self.evaluate(w)

    def observe(self, w: MixedVector, rng: np.random.Generator) -> np.ndarray:
        """Noisy value; the noise variance is relative to the output scale."""
        return add_observation_noise(self.evaluate(w), self.noise_variance, rng, self.output_scale)

    @cached_property
    def output_scale(self) -> np.ndarray:
        """Per-objective standard deviation under uniform sampling (fixed sample)."""
        rng = np.random.default_rng([self.seed, SCALE_STREAM])
        X = sample_array(self.space, rng, SCALE_SAMPLES)
        sd = self.evaluate_array(X).std(axis=0)
        return np.where(sd > 0, sd, 1.0)

    def decoded_categorical(self, X: np.ndarray) -> np.ndarray:
        off = self.space.n_continuous + self.space.n_ordinal
        return self.encryption.apply_array(np.atleast_2d(X)[:, off:])

    @property
    def global_optimum(self) -> float:
        raise NotImplementedError

    def enumerate_array(self) -> np.ndarray:
        """Every point of a fully discrete space, in encoded form."""
        if self.space.n_continuous:
            raise ValueError(f"{self.name} has continuous dimensions")
        sizes = [len(l) for l in self.space.ordinal] + list(self.space.categorical)
        return np.array(list(itertools.product(*[range(k) for k in sizes])), dtype=float)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "space": self.space.to_dict(),
            "n_objectives": self.n_objectives,
            "noise_variance": self.noise_variance,
            "seed": self.seed,
        }


# -- contamination -------------------------------------------------------------


class Contamination(Benchmark):
    """Food-chain contamination control over ``D`` binary stage decisions.

    Spread rates and decontamination rates are uniform draws per stage and
    Monte-Carlo repetition, frozen by the instance seed.
    """

    name = "contamination"

    def __init__(self, seed: int = 0, noise_variance: float = DEFAULT_NOISE_VARIANCE,
                 stages: int = 21, repetitions: int = 100, cost: float = 0.2,
                 upper_limit: float = 0.1, lam: float = 0.01, rho: float = 1.0,
                 initial_fraction: float = 0.01, epsilon: float = 0.05):
        super().__init__(MixedSpace(categorical=(2,) * stages), seed, noise_variance)
        self.stages, self.repetitions = stages, repetitions
        self.cost, self.upper_limit, self.lam, self.rho = cost, upper_limit, lam, rho
        self.initial_fraction = initial_fraction
        self.epsilon = epsilon  # kept for reference; the relaxed objective does not use it
        rng = np.random.default_rng(seed)
        self.spread = rng.random((stages, repetitions))
        self.decon = rng.random((stages, repetitions))

    def _step(self, Z: np.ndarray, i: int, w: np.ndarray) -> np.ndarray:
        w = w[:, None]
        return self.spread[i] * (1 - w) * (1 - Z) + (1 - self.decon[i] * w) * Z

    def violation_penalty(self, W: np.ndarray) -> np.ndarray:
        W = np.atleast_2d(W).astype(float)
        Z = np.full((W.shape[0], self.repetitions), self.initial_fraction)
        pen = np.zeros(W.shape[0])
        for i in range(self.stages):
            Z = self._step(Z, i, W[:, i])
            pen += self.rho * (Z > self.upper_limit).mean(axis=1)
        return pen

    def evaluate_array(self, X: np.ndarray) -> np.ndarray:
        W = np.atleast_2d(X).astype(float)
        n_on = W.sum(axis=1)
        f = -(self.cost * n_on + self.violation_penalty(W)) - self.lam * n_on
        return f[:, None]

    def _best_exhaustive(self) -> tuple[float, int]:
        # Depth-first over stage prefixes; each prefix carries its Monte-Carlo
        # state so the 2^D leaves are never materialized at once.
        step_cost = self.cost + self.lam
        limit = 1 << 16
        best = [-np.inf, -1]

        def expand(Z, score, codes, i):
            if i == self.stages:
                k = int(np.argmin(score))
                if -score[k] > best[0]:
                    best[0], best[1] = float(-score[k]), int(codes[k])
                return
            if len(codes) > limit:
                for j in range(0, len(codes), limit):
                    expand(Z[j:j + limit], score[j:j + limit], codes[j:j + limit], i)
                return
            out = []
            for bit in (0, 1):
                w = np.full(len(codes), float(bit))
                Zb = self._step(Z, i, w)
                sb = score + self.rho * (Zb > self.upper_limit).mean(axis=1) + bit * step_cost
                out.append((Zb, sb, codes | (bit << i)))
            expand(np.vstack([o[0] for o in out]), np.concatenate([o[1] for o in out]),
                   np.concatenate([o[2] for o in out]), i + 1)

        expand(np.full((1, self.repetitions), self.initial_fraction), np.zeros(1),
               np.zeros(1, dtype=np.int64), 0)
        return best[0], best[1]

    def _cache_key(self) -> str:
        return (f"contamination_s{self.seed}_D{self.stages}_T{self.repetitions}_c{self.cost}"
                f"_U{self.upper_limit}_l{self.lam}_r{self.rho}_z{self.initial_fraction}.json")

    @cached_property
    def _optimum(self) -> tuple[float, int]:
        path = cache_dir() / self._cache_key()
        try:
            doc = json.loads(path.read_text())
            return float(doc["value"]), int(doc["code"])
        except (OSError, ValueError, KeyError):
            pass
        value, code = self._best_exhaustive()
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps({"value": value, "code": code}))
        except OSError:
            pass
        return value, code

    @property
    def global_optimum(self) -> float:
        return self._optimum[0]

    @property
    def global_argmax(self) -> MixedVector:
        code = self._optimum[1]
        return MixedVector(categorical=tuple((code >> i) & 1 for i in range(self.stages)))


# -- amalgamated -------------------------------------------------------------------

AMALGAMATED_BOUNDS = (
    (0.0, math.pi),
    (-5.0, 5.0),
    (-10.0, 10.0),
    (-5.0, 5.0),
    (-2.0, 2.0),
    (-math.pi / 2, math.pi / 2),
    (-30.0, 30.0),
)


def _piece(k: int, w: np.ndarray, prev: np.ndarray | None = None) -> np.ndarray:
    if k == 0:
        return np.sin(w)
    if k == 1:
        return -(w ** 4 - 16 * w ** 2 + 5 * w) / 2
    if k == 2:
        return -(w ** 2)
    if k == 3:
        return -(10 + w ** 2 - 10 * np.cos(2 * np.pi * w))
    if k == 4:
        return -(100 * (w - prev ** 2) ** 2 + (1 - w) ** 2)
    if k == 5:
        return np.abs(np.cos(w))
    if k == 6:
        return -w
    raise ValueError(k)


def _continuous_piece_max(k: int, lo: float, hi: float) -> float:
    cands = [lo, hi]
    if k == 0:
        cands.append(math.pi / 2)
    elif k == 1:
        cands += [r.real for r in np.roots([4.0, 0.0, -32.0, 5.0]) if abs(r.imag) < 1e-12]
    elif k in (2, 3, 5):
        cands.append(0.0)
    cands = np.array([c for c in cands if lo <= c <= hi])
    return float(_piece(k, cands).max())


class Amalgamated(Benchmark):
    """Piece-wise sum of classic test functions over 13 mixed slots.

    Slot ``i`` (1-based) uses piece ``(i - 1) mod 7``. Slots 1-2 are
    continuous, 3-5 ordinal and 6-13 categorical; discrete slots take 5
    equally spaced values over their piece's bounds.
    """

    name = "amalgamated"
    N_CONTINUOUS, N_ORDINAL, N_CATEGORICAL, LEVELS = 2, 3, 8, 5

    def __init__(self, seed: int = 0, noise_variance: float = DEFAULT_NOISE_VARIANCE,
                 encrypt: bool = True):
        self.pieces = [(i - 1) % 7 for i in range(1, self.dim + 1)]
        if self.pieces[0] == 4:
            raise ValueError("a Rosenbrock piece cannot occupy the first slot")
        m, n = self.N_CONTINUOUS, self.N_ORDINAL
        grids = [np.linspace(*AMALGAMATED_BOUNDS[k], self.LEVELS) for k in self.pieces]
        self.grids = grids
        space = MixedSpace(
            continuous=tuple(AMALGAMATED_BOUNDS[k] for k in self.pieces[:m]),
            ordinal=tuple(tuple(g) for g in grids[m:m + n]),
            categorical=(self.LEVELS,) * self.N_CATEGORICAL,
        )
        enc = make_encryption(space, seed) if encrypt else None
        super().__init__(space, seed, noise_variance, enc)

    @property
    def dim(self) -> int:
        return self.N_CONTINUOUS + self.N_ORDINAL + self.N_CATEGORICAL

    def decode(self, X: np.ndarray) -> np.ndarray:
        """Real slot values, (n, 13)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m, n = self.N_CONTINUOUS, self.N_ORDINAL
        V = np.empty_like(X)
        V[:, :m] = X[:, :m]
        for j in range(n):
            V[:, m + j] = self.grids[m + j][X[:, m + j].astype(int)]
        C = self.decoded_categorical(X)
        for j in range(self.N_CATEGORICAL):
            V[:, m + n + j] = self.grids[m + n + j][C[:, j]]
        return V

    def evaluate_array(self, X: np.ndarray) -> np.ndarray:
        V = self.decode(X)
        total = np.zeros(V.shape[0])
        for i, k in enumerate(self.pieces):
            total += _piece(k, V[:, i], V[:, i - 1] if k == 4 else None)
        return total[:, None]

    @cached_property
    def global_optimum(self) -> float:
        # Chain DP over slots: only Rosenbrock slots couple to their predecessor.
        m = self.N_CONTINUOUS
        total = 0.0
        i = 0
        while i < self.dim:
            k = self.pieces[i]
            nxt_coupled = i + 1 < self.dim and self.pieces[i + 1] == 4
            if nxt_coupled:
                if i < m or i + 1 < m:
                    raise NotImplementedError("continuous slot inside a Rosenbrock pair")
                a, b = self.grids[i][:, None], self.grids[i + 1][None, :]
                total += float((_piece(k, a) + _piece(4, b, a)).max())
                i += 2
                continue
            if i < m:
                total += _continuous_piece_max(k, *AMALGAMATED_BOUNDS[k])
            else:
                total += float(_piece(k, self.grids[i]).max())
            i += 1
        return total


# -- Rastrigin -----------------------------------------------------------------------


class Rastrigin(Benchmark):
    name = "rastrigin"

    def __init__(self, seed: int = 0, noise_variance: float = DEFAULT_NOISE_VARIANCE,
                 n_continuous: int = 3, n_ordinal: int = 6, levels: int = 5,
                 bounds: tuple[float, float] = (-5.0, 5.0)):
        grid = tuple(np.linspace(*bounds, levels).tolist())
        space = MixedSpace(continuous=(bounds,) * n_continuous, ordinal=(grid,) * n_ordinal)
        super().__init__(space, seed, noise_variance)

    def evaluate_array(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m = self.space.n_continuous
        V = X.copy()
        for j, levels in enumerate(self.space.ordinal):
            V[:, m + j] = np.asarray(levels)[X[:, m + j].astype(int)]
        return (-(10 + V ** 2 - 10 * np.cos(2 * np.pi * V))).sum(axis=1)[:, None]

    @property
    def global_optimum(self) -> float:
        # 0 lies inside the bounds and on the odd-sized ordinal grid.
        return 0.0


# -- Styblinski-Tang -------------------------------------------------------------------


class StyblinskiTang(Benchmark):
    name = "styblinski"

    def __init__(self, seed: int = 0, noise_variance: float = DEFAULT_NOISE_VARIANCE,
                 dim: int = 10, levels: int = 5, bounds: tuple[float, float] = (-5.0, 2.5),
                 encrypt: bool = True):
        self.grid = np.linspace(*bounds, levels)
        space = MixedSpace(categorical=(levels,) * dim)
        enc = make_encryption(space, seed) if encrypt else None
        super().__init__(space, seed, noise_variance, enc)

    @staticmethod
    def term(w):
        return -(w ** 4 - 16 * w ** 2 + 5 * w) / 2

    def evaluate_array(self, X: np.ndarray) -> np.ndarray:
        V = self.grid[self.decoded_categorical(X)]
        return self.term(V).sum(axis=1)[:, None]

    @property
    def global_optimum(self) -> float:
        return float(self.space.n_categorical * self.term(self.grid).max())

    @property
    def global_argmax(self) -> MixedVector:
        best = int(np.argmax(self.term(self.grid)))
        inv = self.encryption.inverse.permutations
        return MixedVector(categorical=tuple(p[best] for p in inv))


# -- ZDT6 ------------------------------------------------------------------------------


class ZDT6(Benchmark):
    name = "zdt6"
    n_objectives = 2

    def __init__(self, seed: int = 0, noise_variance: float = DEFAULT_NOISE_VARIANCE,
                 dim: int = 10, levels: int = 5, encrypt: bool = True):
        self.grid = np.linspace(0.0, 1.0, levels)
        space = MixedSpace(categorical=(levels,) * dim)
        enc = make_encryption(space, seed) if encrypt else None
        super().__init__(space, seed, noise_variance, enc)

    @staticmethod
    def objectives(V: np.ndarray) -> np.ndarray:
        V = np.atleast_2d(V)
        n = V.shape[1]
        f1 = np.exp(-4 * V[:, 0]) * np.sin(6 * np.pi * V[:, 0]) ** 6 - 1
        g = 1 + 9 * (V[:, 1:].sum(axis=1) / (n - 1)) ** 0.25
        f2 = -g * (1 - (f1 / g) ** 2)
        return np.column_stack([f1, f2])

    def evaluate_array(self, X: np.ndarray) -> np.ndarray:
        return self.objectives(self.grid[self.decoded_categorical(X)])

    @cached_property
    def global_pareto_points(self) -> list[MixedVector]:
        """Pareto-optimal points in the optimizer's (encrypted) coordinates.

        g is minimal (= 1) only when every tail gene sits at level 0, and for a
        fixed first gene f2 strictly decreases in g, so the front lives on that
        slice; the non-dominated first-gene levels are found by enumeration.
        """
        D, levels = self.space.n_categorical, len(self.grid)
        V = np.zeros((levels, D))
        V[:, 0] = self.grid
        F = self.objectives(V)
        keep = ~dominance_matrix(F).any(axis=0)
        inv = self.encryption.inverse.permutations
        out = []
        for lv in np.flatnonzero(keep):
            level_idx = [int(lv)] + [0] * (D - 1)
            out.append(MixedVector(categorical=tuple(p[i] for p, i in zip(inv, level_idx))))
        return out


# -- NK landscapes ---------------------------------------------------------------------


class NKLandscape(Benchmark):
    """Multi-allele NK landscape with probabilistic epistatic links.

    Each ordered gene pair (i, j), i != j, is linked with probability
    ``ruggedness``; gene i's component cost is a seeded uniform table over
    the joint alleles of i and its linked genes. Fitness is the mean cost.
    """

    name = "nk"

    def __init__(self, seed: int = 0, noise_variance: float = DEFAULT_NOISE_VARIANCE,
                 n_genes: int = 8, alleles: int = 4, ruggedness: float = 0.2,
                 tables: list[np.ndarray] | None = None):
        if not 0.0 <= ruggedness <= 1.0:
            raise ValueError("ruggedness must lie in [0, 1]")
        super().__init__(MixedSpace(categorical=(alleles,) * n_genes), seed, noise_variance)
        self.n_genes, self.alleles, self.ruggedness = n_genes, alleles, ruggedness
        rng = np.random.default_rng(seed)
        links = rng.random((n_genes, n_genes)) < ruggedness
        np.fill_diagonal(links, False)
        self.neighbors = [tuple(np.flatnonzero(links[i]).tolist()) for i in range(n_genes)]
        if tables is None:
            tables = [rng.random(alleles ** (1 + len(nb))) for nb in self.neighbors]
        self.tables = [np.asarray(t, dtype=float) for t in tables]
        for i, t in enumerate(self.tables):
            if t.shape != (alleles ** (1 + len(self.neighbors[i])),):
                raise ValueError(f"cost table {i} has the wrong size")

    def component_costs(self, X: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(np.asarray(X)).astype(np.int64)
        out = np.empty(A.shape, dtype=float)
        for i, nb in enumerate(self.neighbors):
            idx = A[:, i].copy()
            for j in nb:
                idx = idx * self.alleles + A[:, j]
            out[:, i] = self.tables[i][idx]
        return out

    def evaluate_array(self, X: np.ndarray) -> np.ndarray:
        # left-to-right sum so values do not depend on the reduction kernel
        C = self.component_costs(X)
        total = np.zeros(C.shape[0])
        for i in range(C.shape[1]):
            total += C[:, i]
        return (total / self.n_genes)[:, None]

    @cached_property
    def _optimum(self) -> tuple[float, np.ndarray]:
        X = self.enumerate_array()
        f = self.evaluate_array(X)[:, 0]
        k = int(np.argmax(f))
        return float(f[k]), X[k]

    @property
    def global_optimum(self) -> float:
        return self._optimum[0]

    @property
    def global_argmax(self) -> MixedVector:
        return self.space.from_array(self._optimum[1])


BENCHMARKS: dict[str, type[Benchmark]] = {
    "contamination": Contamination,
    "amalgamated": Amalgamated,
    "nk": NKLandscape,
    "rastrigin": Rastrigin,
    "styblinski": StyblinskiTang,
    "zdt6": ZDT6,
}


def make_benchmark(name: str, seed: int = 0, noise_variance: float = DEFAULT_NOISE_VARIANCE,
                   **kwargs) -> Benchmark:
    try:
        cls = BENCHMARKS[name]
    except KeyError:
        raise ValueError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}") from None
    return cls(seed=seed, noise_variance=noise_variance, **kwargs)
