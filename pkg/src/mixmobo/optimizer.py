"""The MixMOBO outer loop and its ask/tell interface.

One epoch: fit the surrogate (LOOCV hyperparameters), let every acquisition
in the portfolio nominate a Q-batch with the GA, push apart near-duplicate
nominees by mutation, pick the batch with HedgeMO and evaluate it.
"""

from __future__ import annotations

import copy
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from .acquisition import AcquisitionKind, AcquisitionParams, check_portfolio
from .hedge import NomineeHistory, draw_sources, hedge_state
from .moga import GaConfig, dominance_matrix, optimize_acquisition_array, rank_and_crowd
from .space import MixedSpace, MixedVector, mutate_point, pairwise_l2, sample_uniform
from .surrogate import (
    Dataset,
    FactorizationError,
    GpModel,
    HyperparamSearch,
    KernelHyperparams,
    fit_gp,
    fit_hyperparams,
)

logger = logging.getLogger(__name__)

STATE_SCHEMA_VERSION = 1

BlackBox = Callable[[MixedVector], Any]


class ProtocolError(RuntimeError):
    """ask/tell called out of order."""


class PointMismatchError(ValueError):
    """Told points differ from the outstanding ask."""


class EvaluationError(RuntimeError):
    def __init__(self, point: MixedVector, cause: BaseException):
        super().__init__(f"black-box evaluation failed at {point}: {cause!r}")
        self.point = point


@dataclass(frozen=True)
class OptimizerConfig:
    n_init: int = 50
    epochs: int = 200
    batch_size: int = 1
    mutation_rate: float = 0.2
    dedup_tolerance: float = 1e-6
    dedup_against_data: bool = True
    dedup_max_retries: int = 100
    portfolio: tuple[AcquisitionKind, ...] = (
        AcquisitionKind.EI, AcquisitionKind.PI, AcquisitionKind.UCB, AcquisitionKind.SMC,
    )
    ga: GaConfig = GaConfig()
    acquisition: AcquisitionParams = AcquisitionParams()
    hyperparams: HyperparamSearch = HyperparamSearch()
    eta: float = 1.0
    ga_seed_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "portfolio", check_portfolio(self.portfolio))
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.dedup_tolerance < 0:
            raise ValueError("dedup_tolerance must be >= 0")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.batch_size > self.ga.population_size:
            raise ValueError("batch_size cannot exceed the GA population size")

    @property
    def budget(self) -> int:
        return self.n_init + self.batch_size * self.epochs

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["portfolio"] = [k.value for k in self.portfolio]
        doc["acquisition"]["incumbents"] = None
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> OptimizerConfig:
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown optimizer config keys: {sorted(unknown)}")
        if "ga" in doc:
            doc["ga"] = GaConfig(**doc["ga"])
        if "acquisition" in doc:
            doc["acquisition"] = AcquisitionParams(**{k: v for k, v in doc["acquisition"].items()
                                                      if k != "incumbents"})
        if "hyperparams" in doc:
            hp = {k: tuple(v) if isinstance(v, list) else v for k, v in doc["hyperparams"].items()}
            doc["hyperparams"] = HyperparamSearch(**hp)
        if "portfolio" in doc:
            doc["portfolio"] = tuple(AcquisitionKind.parse(k) for k in doc["portfolio"])
        return cls(**doc)


@dataclass
class ParetoSet:
    points: list[MixedVector]
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(zip(self.points, self.values))


@dataclass
class Proposal:
    selected: list[MixedVector]
    nominees: list[list[MixedVector]]
    record: dict[str, Any]


@dataclass
class OptimizerState:
    space: MixedSpace
    config: OptimizerConfig
    rng: np.random.Generator
    dataset: Dataset | None = None
    history: NomineeHistory = field(default_factory=NomineeHistory)
    epoch: int = 0
    hyperparams: KernelHyperparams | None = None
    pending: Proposal | None = None
    trace: list[dict[str, Any]] = field(default_factory=list)

    @classmethod
    def new(cls, space: MixedSpace, config: OptimizerConfig | None = None) -> OptimizerState:
        config = config or OptimizerConfig()
        return cls(space, config, np.random.default_rng(config.seed))

    @property
    def n_evaluations(self) -> int:
        return 0 if self.dataset is None else len(self.dataset)

    @property
    def initialized(self) -> bool:
        return self.dataset is not None

    @property
    def done(self) -> bool:
        return self.initialized and self.epoch >= self.config.epochs

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        pending = None
        if self.pending is not None:
            pending = {
                "points": [w.to_dict() for w in self.pending.selected],
                "nominees": [[w.to_dict() for w in row] for row in self.pending.nominees],
                "record": self.pending.record,
            }
        return {
            "schema_version": STATE_SCHEMA_VERSION,
            "space": self.space.to_dict(),
            "config": self.config.to_dict(),
            "dataset": None if self.dataset is None else {
                "points": [w.to_dict() for w in self.dataset.points],
                "objectives": self.dataset.objectives.tolist(),
            },
            "history": self.history.to_list(),
            "epoch": self.epoch,
            "hyperparams": None if self.hyperparams is None else self.hyperparams.to_dict(),
            "rng_state": self.rng.bit_generator.state,
            "pending_ask": pending,
            "trace": self.trace,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> OptimizerState:
        version = doc.get("schema_version")
        if version != STATE_SCHEMA_VERSION:
            raise ValueError(f"unsupported state schema_version {version!r}")
        space = MixedSpace.from_dict(doc["space"])
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = doc["rng_state"]
        data = doc.get("dataset")
        dataset = None
        if data is not None:
            pts = [MixedVector.from_dict(p) for p in data["points"]]
            obj = np.asarray(data["objectives"], dtype=float).reshape(-1, len(pts))
            dataset = Dataset(pts, obj)
        pending = doc.get("pending_ask")
        if pending is not None:
            pending = Proposal(
                [MixedVector.from_dict(p) for p in pending["points"]],
                [[MixedVector.from_dict(p) for p in row] for row in pending["nominees"]],
                pending["record"],
            )
        hp = doc.get("hyperparams")
        return cls(
            space=space,
            config=OptimizerConfig.from_dict(doc["config"]),
            rng=rng,
            dataset=dataset,
            history=NomineeHistory.from_list(doc.get("history", [])),
            epoch=int(doc.get("epoch", 0)),
            hyperparams=None if hp is None else KernelHyperparams.from_dict(hp),
            pending=pending,
            trace=list(doc.get("trace", [])),
        )

    def save(self, path: str | os.PathLike) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(self.to_dict(), fh)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | os.PathLike) -> OptimizerState:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- helpers ---------------------------------------------------------------------


def as_objective_vector(value: Any) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float)).ravel()
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError(f"objective values must be finite, got {value!r}")
    return v


def _evaluate(f: BlackBox, points: Sequence[MixedVector]) -> np.ndarray:
    rows = []
    for w in points:
        try:
            rows.append(as_objective_vector(f(w)))
        except Exception as exc:
            raise EvaluationError(w, exc) from exc
    if len({r.size for r in rows}) > 1:
        raise ValueError("black box returned a varying number of objectives")
    return np.vstack(rows)


def initialize_dataset(f: BlackBox, s: MixedSpace, n_init: int, rng: np.random.Generator) -> Dataset:
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    points = [sample_uniform(s, rng) for _ in range(n_init)]
    values = _evaluate(f, points)
    return Dataset(points, values.T)


def extract_pareto_set(d: Dataset) -> ParetoSet:
    if len(d) == 0:
        raise ValueError("Pareto set of an empty dataset is undefined")
    V = d.values()
    keep = ~dominance_matrix(V).any(axis=0)
    idx = np.flatnonzero(keep)
    return ParetoSet([d.points[i] for i in idx], V[idx])


def _dedup(batch: Sequence[MixedVector], dataset: Dataset | None, s: MixedSpace, beta: float,
           tol: float, rng: np.random.Generator, max_retries: int = 100,
           ) -> tuple[list[MixedVector], list[int]]:
    if tol <= 0 or not batch:
        return list(batch), []
    cat = s.categorical_mask
    ref = s.features(s.to_array(dataset.points)) if dataset is not None and len(dataset) else \
        np.zeros((0, s.dim))
    out: list[MixedVector] = []
    exhausted: list[int] = []
    for q, w in enumerate(batch):
        cand = w
        for attempt in range(max_retries + 1):
            fc = s.features(s.to_array([cand]))
            if len(ref) == 0 or pairwise_l2(fc, ref, cat).min() >= tol:
                break
            if attempt == max_retries:
                exhausted.append(q)
                logger.warning("dedup retries exhausted for batch slot %d; accepting %s", q, cand)
                break
            cand = mutate_point(w, s, beta, rng)
        out.append(cand)
        ref = np.vstack([ref, s.features(s.to_array([cand]))])
    return out, exhausted


def dedup_mutate(batch: Sequence[MixedVector], dataset: Dataset | None, s: MixedSpace, beta: float,
                 tol: float, rng: np.random.Generator, max_retries: int = 100) -> list[MixedVector]:
    """Mutate batch members closer than ``tol`` to an earlier member or to the data."""
    return _dedup(batch, dataset, s, beta, tol, rng, max_retries)[0]


def _ga_seed_rows(state: OptimizerState) -> np.ndarray | None:
    n = int(state.config.ga_seed_fraction * state.config.ga.population_size)
    if n < 1 or state.dataset is None:
        return None
    order, _, _ = rank_and_crowd(state.dataset.values())
    return state.space.to_array([state.dataset.points[i] for i in order[:n]])


def _fit_surrogate(state: OptimizerState) -> GpModel:
    cfg, data = state.config, state.dataset
    if len(data) >= 2:
        extra = [state.hyperparams] if state.hyperparams is not None else []
        hp = fit_hyperparams(data, state.space, cfg.hyperparams, state.rng, extra_candidates=extra)
    else:
        hp = cfg.hyperparams.default(state.space.dim)
    state.hyperparams = hp
    return fit_gp(data, state.space, hp)


# -- the loop ---------------------------------------------------------------------


def propose_batch(state: OptimizerState, config: OptimizerConfig | None = None) -> Proposal:
    """Fit the surrogate, collect nominees from every acquisition, hedge a batch."""
    cfg = config or state.config
    if state.dataset is None:
        raise ProtocolError("dataset is not initialized")
    s, rng, Q, L = state.space, state.rng, cfg.batch_size, len(cfg.portfolio)
    against = state.dataset if cfg.dedup_against_data else None
    record: dict[str, Any] = {"epoch": state.epoch + 1, "acquisitions": [k.value for k in cfg.portfolio]}
    try:
        model = _fit_surrogate(state)
    except FactorizationError as exc:
        logger.warning("surrogate fit failed (%s); proposing uniform random points", exc)
        model = None
    exhausted: list[list[int]] = []
    if model is None:
        batch = [sample_uniform(s, rng) for _ in range(Q)]
        nominees = [list(batch) for _ in range(L)]
        record["fallback"] = True
    else:
        seeds = _ga_seed_rows(state)
        nominees = []
        for kind in cfg.portfolio:
            X = optimize_acquisition_array(model, kind, cfg.acquisition, s, Q, cfg.ga, rng, seeds)
            pts, ex = _dedup(s.points_from_array(X), against, s, cfg.mutation_rate,
                             cfg.dedup_tolerance, rng, cfg.dedup_max_retries)
            nominees.append(pts)
            if ex:
                exhausted.append([kind.value, ex])
        record["fallback"] = False
        record["hyperparams"] = state.hyperparams.to_dict()
    hedge = hedge_state(model, state.history, L, cfg.eta)
    sources = draw_sources(hedge.probabilities, Q, rng)
    selected = [nominees[l][q] for q, l in enumerate(sources)]
    selected, ex = _dedup(selected, against, s, cfg.mutation_rate, cfg.dedup_tolerance, rng,
                          cfg.dedup_max_retries)
    if ex:
        exhausted.append(["selected", ex])
    record.update(
        probabilities=hedge.probabilities.tolist(),
        gains=hedge.gains.tolist(),
        sources=[cfg.portfolio[l].value for l in sources],
        dedup_exhausted=exhausted,
    )
    return Proposal(selected, nominees, record)


def _append(state: OptimizerState, points: Sequence[MixedVector], values: np.ndarray) -> None:
    values = np.atleast_2d(values)
    if state.dataset is None:
        state.dataset = Dataset(list(points), values.T)
    else:
        state.dataset = state.dataset.extend(points, values)


def ask(state: OptimizerState, config: OptimizerConfig | None = None) -> list[MixedVector]:
    """Points to evaluate next; the initial design first, then one Q-batch per epoch."""
    if state.pending is not None:
        raise ProtocolError("ask called twice without tell")
    if state.dataset is None:
        cfg = config or state.config
        pts = [sample_uniform(state.space, state.rng) for _ in range(cfg.n_init)]
        state.pending = Proposal(pts, [], {"epoch": 0, "initial": True})
    else:
        state.pending = propose_batch(state, config)
    return list(state.pending.selected)


def tell(state: OptimizerState, points: Sequence[MixedVector], values) -> OptimizerState:
    if state.pending is None:
        raise ProtocolError("tell called without an outstanding ask")
    asked = state.pending.selected
    if list(points) != list(asked):
        raise PointMismatchError("told points differ from the asked points")
    V = np.vstack([as_objective_vector(v) for v in values]) if len(values) else np.zeros((0, 0))
    if V.shape[0] != len(asked):
        raise ValueError(f"expected {len(asked)} value rows, got {V.shape[0]}")
    if state.dataset is not None and V.shape[1] != state.dataset.n_objectives:
        raise ValueError(
            f"dimension mismatch: expected {state.dataset.n_objectives} objectives, got {V.shape[1]}"
        )
    pending, state.pending = state.pending, None
    _append(state, asked, V)
    if pending.nominees:
        state.history.append(pending.nominees)
        state.epoch += 1
        rec = dict(pending.record, values=V.tolist(), points=[w.to_dict() for w in asked])
        state.trace.append(rec)
        logger.info("epoch %d probs=%s sources=%s values=%s", state.epoch,
                    np.round(rec["probabilities"], 4).tolist(), rec["sources"], V.tolist())
    return state


def run_epoch(state: OptimizerState, config: OptimizerConfig | None, f: BlackBox) -> OptimizerState:
    """One optimization epoch; on evaluation failure the state is left untouched."""
    if state.pending is not None:
        raise ProtocolError("cannot run an epoch with an outstanding ask")
    if state.dataset is None:
        raise ProtocolError("dataset is not initialized")
    saved = (copy.deepcopy(state.rng.bit_generator.state), state.hyperparams)
    try:
        points = ask(state, config)
        values = _evaluate(f, points)
    except Exception:
        state.rng.bit_generator.state = saved[0]
        state.hyperparams = saved[1]
        state.pending = None
        raise
    return tell(state, points, values)


class MixMOBO:
    """Stateful convenience wrapper around the functional loop.

    >>> opt = MixMOBO(space, OptimizerConfig(n_init=10, epochs=20))
    >>> opt.run(black_box)                     # doctest: +SKIP
    >>> opt.pareto_set()                       # doctest: +SKIP
    """

    def __init__(self, space: MixedSpace, config: OptimizerConfig | None = None,
                 state: OptimizerState | None = None):
        self.state = state or OptimizerState.new(space, config)

    @property
    def config(self) -> OptimizerConfig:
        return self.state.config

    @property
    def dataset(self) -> Dataset | None:
        return self.state.dataset

    def ask(self) -> list[MixedVector]:
        return ask(self.state)

    def tell(self, points: Sequence[MixedVector], values) -> None:
        tell(self.state, points, values)

    def run(self, f: BlackBox, callback: Callable[[OptimizerState], None] | None = None) -> ParetoSet:
        while not self.state.done:
            points = self.ask()
            self.tell(points, _evaluate(f, points))
            if callback is not None:
                callback(self.state)
        return self.pareto_set()

    def pareto_set(self) -> ParetoSet:
        if self.state.dataset is None:
            raise ProtocolError("no data yet")
        return extract_pareto_set(self.state.dataset)

    def save(self, path) -> None:
        self.state.save(path)

    @classmethod
    def load(cls, path) -> MixMOBO:
        st = OptimizerState.load(path)
        return cls(st.space, st.config, st)

    def with_config(self, **changes) -> MixMOBO:
        self.state.config = replace(self.state.config, **changes)
        return self
