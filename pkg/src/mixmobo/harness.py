"""Seeded benchmark campaigns: MixMOBO against random sampling, CSV records and reports."""

from __future__ import annotations

import csv
import json
import logging
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .acquisition import AcquisitionKind
from .benchmarks import DEFAULT_NOISE_VARIANCE, BENCHMARKS, Benchmark, make_benchmark
from .benchmarks import normalized_reward, p_optimum
from .moga import dominance_matrix
from .optimizer import MixMOBO, OptimizerConfig, OptimizerState
from .space import sample_uniform

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
ALGORITHMS = ("mixmobo", "random")
OUT_ENV = "MIXMOBO_OUT_DIR"
CHECKPOINTS = (50, 100, 150, 200, 250)


class ConfigError(ValueError):
    """Invalid campaign configuration or inconsistent run records."""


@dataclass(frozen=True)
class RunConfig:
    benchmark: str
    budget: int = 250
    n_init: int = 50
    q: int = 1
    replicates: int = 10
    seeds: tuple[int, ...] | None = None
    noise_variance: float = DEFAULT_NOISE_VARIANCE
    instance_seed: int = 0
    optimizer: dict[str, Any] = field(default_factory=dict)
    out: str | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.benchmark not in BENCHMARKS:
            raise ConfigError(f"unknown benchmark {self.benchmark!r}; choose from {sorted(BENCHMARKS)}")
        if self.n_init < 1:
            raise ConfigError("n_init must be >= 1")
        if self.budget < self.n_init:
            raise ConfigError(f"budget {self.budget} is smaller than n_init {self.n_init}")
        if self.q < 1:
            raise ConfigError("q must be >= 1")
        if (self.budget - self.n_init) % self.q:
            raise ConfigError(f"budget - n_init = {self.budget - self.n_init} is not a multiple of q = {self.q}")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.noise_variance < 0:
            raise ConfigError("noise variance must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.seeds is not None:
            seeds = tuple(int(s) for s in self.seeds)
            if len(seeds) != self.replicates:
                raise ConfigError(f"{len(seeds)} seeds given for {self.replicates} replicates")
            if len(set(seeds)) != len(seeds):
                raise ConfigError("seeds must be distinct")
            object.__setattr__(self, "seeds", seeds)
        for key in ("n_init", "epochs", "batch_size", "seed"):
            if key in self.optimizer:
                raise ConfigError(f"optimizer.{key} is derived from the run config; set it there")
        try:
            self.optimizer_config(0)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid optimizer overrides: {exc}") from exc

    @property
    def seed_list(self) -> tuple[int, ...]:
        return self.seeds if self.seeds is not None else tuple(range(self.replicates))

    @property
    def epochs(self) -> int:
        return (self.budget - self.n_init) // self.q

    @property
    def out_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUT_ENV) or "mixmobo_runs")

    def optimizer_config(self, seed: int) -> OptimizerConfig:
        doc = dict(self.optimizer, n_init=self.n_init, epochs=self.epochs, batch_size=self.q, seed=seed)
        return OptimizerConfig.from_dict(doc)

    def make_benchmark(self) -> Benchmark:
        return make_benchmark(self.benchmark, seed=self.instance_seed, noise_variance=self.noise_variance)

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["seeds"] = list(self.seed_list)
        doc["schema_version"] = CSV_SCHEMA_VERSION
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> RunConfig:
        doc = dict(doc)
        doc.pop("schema_version", None)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
        if "benchmark" not in doc:
            raise ConfigError("run config needs a benchmark")
        if doc.get("seeds") is not None:
            doc["seeds"] = tuple(doc["seeds"])
            doc.setdefault("replicates", len(doc["seeds"]))
        return cls(**doc)


def noise_rng(seed: int) -> np.random.Generator:
    """Observation-noise stream of a replicate, separate from the optimizer's."""
    return np.random.default_rng([seed, 1])


def observe_fn(bench: Benchmark, seed: int):
    rng = noise_rng(seed)
    return lambda w: bench.observe(w, rng)


def random_search_points(bench: Benchmark, seed: int, budget: int) -> np.ndarray:
    # Same stream as the optimizer, so the first n_init points are its initial design.
    rng = np.random.default_rng(seed)
    return bench.space.to_array([sample_uniform(bench.space, rng) for _ in range(budget)])


# -- one replicate ------------------------------------------------------------------


@dataclass
class ReplicateResult:
    seed: int
    X: dict[str, np.ndarray]
    true_values: dict[str, np.ndarray]
    state: dict[str, Any]
    seconds: dict[str, float]


def run_replicate(cfg: RunConfig, seed: int) -> ReplicateResult:
    bench = cfg.make_benchmark()
    f = observe_fn(bench, seed)
    t0 = time.perf_counter()
    opt = MixMOBO(bench.space, cfg.optimizer_config(seed))
    opt.run(f)
    t1 = time.perf_counter()
    X_opt = bench.space.to_array(opt.dataset.points)
    X_rand = random_search_points(bench, seed, cfg.budget)
    rand_obs = observe_fn(bench, seed)
    for w in bench.space.points_from_array(X_rand):
        rand_obs(w)
    t2 = time.perf_counter()
    if len(X_opt) != cfg.budget:
        raise RuntimeError(f"run performed {len(X_opt)} evaluations, expected {cfg.budget}")
    return ReplicateResult(
        seed,
        {"mixmobo": X_opt, "random": X_rand},
        {"mixmobo": bench.evaluate_array(X_opt), "random": bench.evaluate_array(X_rand)},
        opt.state.to_dict(),
        {"mixmobo": t1 - t0, "random": t2 - t1},
    )


# -- metrics over a run ---------------------------------------------------------------


def best_so_far(values: np.ndarray) -> np.ndarray:
    """Running per-objective maximum, (n, K)."""
    return np.maximum.accumulate(np.atleast_2d(values), axis=0)


def pareto_mask(V: np.ndarray) -> np.ndarray:
    return ~dominance_matrix(V).any(axis=0)


def p_optimum_trajectory(bench: Benchmark, X: np.ndarray, V: np.ndarray) -> np.ndarray:
    """P-optimum of the non-dominated set of the first i evaluations, for every i."""
    glob = bench.global_pareto_points
    off = bench.space.n_continuous + bench.space.n_ordinal
    out = np.empty(len(X))
    for i in range(len(X)):
        keep = pareto_mask(V[: i + 1])
        out[i] = p_optimum(X[: i + 1][keep, off:].astype(int), glob)
    return out


def _has_pareto_oracle(bench: Benchmark) -> bool:
    return hasattr(bench, "global_pareto_points")


def run_columns(K: int) -> list[str]:
    return (["schema_version", "benchmark", "algorithm", "seed", "eval"]
            + [f"best_f{k + 1}" for k in range(K)] + ["p_optimum", "normalized_reward"])


def run_rows(cfg: RunConfig, bench: Benchmark, algorithm: str, seed: int, X: np.ndarray,
             V: np.ndarray, random_best: float | None) -> list[list[Any]]:
    best = best_so_far(V)
    K = V.shape[1]
    pop = p_optimum_trajectory(bench, X, V) if _has_pareto_oracle(bench) else None
    rows = []
    for i in range(len(V)):
        nr = ""
        if K == 1 and random_best is not None:
            try:
                nr = _fmt(normalized_reward(best[i, 0], random_best, bench.global_optimum))
            except ZeroDivisionError:
                nr = ""
        rows.append([CSV_SCHEMA_VERSION, cfg.benchmark, algorithm, seed, i + 1]
                    + [_fmt(b) for b in best[i]]
                    + ["" if pop is None else _fmt(pop[i]), nr])
    return rows


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def read_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- campaigns -------------------------------------------------------------------------


@dataclass
class CampaignResult:
    config: RunConfig
    directory: Path
    run_files: list[Path]
    aggregate_file: Path | None
    random_best: float | None
    completed_seeds: list[int]
    interrupted: bool = False


def _campaign_dir(cfg: RunConfig) -> Path:
    return cfg.out_dir / cfg.benchmark


def _save_raw(d: Path, res: ReplicateResult) -> None:
    raw = d / "raw"
    raw.mkdir(parents=True, exist_ok=True)
    np.savez(raw / f"seed{res.seed}.npz", **{f"X_{a}": res.X[a] for a in ALGORITHMS},
             **{f"V_{a}": res.true_values[a] for a in ALGORITHMS})
    tmp = d / f"state_seed{res.seed}.json.tmp"
    with open(tmp, "w") as fh:
        json.dump(res.state, fh)
    os.replace(tmp, d / f"state_seed{res.seed}.json")


def run_campaign(cfg: RunConfig) -> CampaignResult:
    """Run every replicate, then write per-run and aggregate CSVs.

    Each finished replicate is saved immediately, so an interrupted campaign
    still gets CSVs for the completed seeds.
    """
    d = _campaign_dir(cfg)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "config.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    bench = cfg.make_benchmark()
    if bench.n_objectives == 1:
        bench.global_optimum  # computed (and cached) once, before workers fan out
    results: dict[int, ReplicateResult] = {}
    interrupted = False
    try:
        if cfg.workers > 1 and len(cfg.seed_list) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                futures = [pool.submit(run_replicate, cfg, s) for s in cfg.seed_list]
                for fut in futures:
                    res = fut.result()
                    results[res.seed] = res
                    _save_raw(d, res)
        else:
            for s in cfg.seed_list:
                res = run_replicate(cfg, s)
                results[s] = res
                _save_raw(d, res)
                logger.info("%s seed %d finished in %.1fs", cfg.benchmark, s, res.seconds["mixmobo"])
    except KeyboardInterrupt:
        interrupted = True
        logger.warning("interrupted; writing results for %d completed seeds", len(results))
    return _finalize(cfg, bench, d, results, interrupted)


def _finalize(cfg: RunConfig, bench: Benchmark, d: Path, results: dict[int, ReplicateResult],
              interrupted: bool) -> CampaignResult:
    seeds = [s for s in cfg.seed_list if s in results]
    if not seeds:
        return CampaignResult(cfg, d, [], None, None, [], interrupted)
    random_best = None
    if bench.n_objectives == 1:
        random_best = float(np.mean([results[s].true_values["random"][:, 0].max() for s in seeds]))
    K = bench.n_objectives
    header = run_columns(K)
    runs_dir = d / "runs"
    runs_dir.mkdir(exist_ok=True)
    files, all_rows = [], []
    for s in seeds:
        for a in ALGORITHMS:
            rows = run_rows(cfg, bench, a, s, results[s].X[a], results[s].true_values[a], random_best)
            path = runs_dir / f"{a}_seed{s}.csv"
            _write_csv(path, header, rows)
            files.append(path)
            all_rows.extend(dict(zip(header, map(str, r))) for r in rows)
    agg = d / "aggregate.csv"
    agg_header, agg_rows = aggregate(all_rows)
    _write_csv(agg, agg_header, agg_rows)
    timing = {str(s): results[s].seconds for s in seeds}
    with open(d / "timing.json", "w") as fh:
        json.dump({"seconds": timing, "interrupted": interrupted, "random_best": random_best}, fh,
                  indent=2)
    for s in seeds:
        pareto_file = d / f"pareto_seed{s}.json"
        X, V = results[s].X["mixmobo"], results[s].true_values["mixmobo"]
        keep = pareto_mask(V)
        with open(pareto_file, "w") as fh:
            json.dump({"points": [w.to_dict() for w in bench.space.points_from_array(X[keep])],
                       "values": V[keep].tolist()}, fh)
    return CampaignResult(cfg, d, files, agg, random_best, seeds, interrupted)


def _metric_columns(header: Sequence[str]) -> list[str]:
    return [c for c in header if c.startswith("best_f")] + ["p_optimum", "normalized_reward"]


def aggregate(rows: list[dict[str, str]]) -> tuple[list[str], list[list[Any]]]:
    """Mean and (population) standard deviation of every metric per algorithm and eval."""
    if not rows:
        raise ConfigError("no run records to aggregate")
    check_records(rows)
    metrics = _metric_columns(list(rows[0]))
    header = ["schema_version", "benchmark", "algorithm", "eval", "n_runs"]
    for m in metrics:
        header += [f"{m}_mean", f"{m}_sd"]
    groups: dict[tuple[str, int], list[dict[str, str]]] = {}
    for r in rows:
        groups.setdefault((r["algorithm"], int(r["eval"])), []).append(r)
    out = []
    bench = rows[0]["benchmark"]
    for (alg, ev) in sorted(groups, key=lambda k: (_alg_order(k[0]), k[1])):
        g = groups[(alg, ev)]
        line: list[Any] = [CSV_SCHEMA_VERSION, bench, alg, ev, len(g)]
        for m in metrics:
            vals = [float(r[m]) for r in g if r.get(m, "") != ""]
            if vals:
                line += [_fmt(statistics.fmean(vals)), _fmt(statistics.pstdev(vals))]
            else:
                line += ["", ""]
        out.append(line)
    return header, out


def _alg_order(a: str) -> tuple[int, str]:
    return (ALGORITHMS.index(a), a) if a in ALGORITHMS else (len(ALGORITHMS), a)


def check_records(rows: list[dict[str, str]]) -> None:
    versions = {r.get("schema_version") for r in rows}
    if versions != {str(CSV_SCHEMA_VERSION)}:
        raise ConfigError(f"unsupported or mixed schema versions: {sorted(map(str, versions))}")
    benches = {r["benchmark"] for r in rows}
    if len(benches) != 1:
        raise ConfigError(f"cannot aggregate records from different benchmarks: {sorted(benches)}")


# -- reports ----------------------------------------------------------------------------


def load_records(paths: Sequence[str | os.PathLike]) -> list[dict[str, str]]:
    """Rows of per-run CSVs; directories are searched for ``runs/*.csv``."""
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            found = sorted(p.glob("runs/*.csv")) or sorted(p.glob("*.csv"))
            found = [f for f in found if f.name != "aggregate.csv"]
            if not found:
                raise ConfigError(f"no run records under {p}")
            files.extend(found)
        elif p.is_file():
            files.append(p)
        else:
            raise ConfigError(f"no such record: {p}")
    rows = []
    for f in files:
        recs = read_csv(f)
        if not recs or "eval" not in recs[0]:
            raise ConfigError(f"{f} is not a run record")
        rows.extend(recs)
    if not rows:
        raise ConfigError("no run records given")
    check_records(rows)
    return rows


@dataclass
class Report:
    benchmark: str
    header: list[str]
    rows: list[list[Any]]
    plot_header: list[str]
    plot_rows: list[list[Any]]

    def format(self) -> str:
        widths = [max(len(str(x)) for x in col) for col in zip(self.header, *self.rows)]
        lines = [f"benchmark: {self.benchmark}"]
        for r in [self.header, *self.rows]:
            lines.append("  ".join(str(x).rjust(w) for x, w in zip(r, widths)))
        return "\n".join(lines)


def _mean_sd(vals: list[float]) -> str:
    if not vals:
        return "-"
    return f"{statistics.fmean(vals):.4f} ± {statistics.pstdev(vals):.4f}"


def build_report(rows: list[dict[str, str]], checkpoints: Sequence[int] | None = None) -> Report:
    check_records(rows)
    bench = rows[0]["benchmark"]
    max_eval = max(int(r["eval"]) for r in rows)
    cps = [c for c in (checkpoints or CHECKPOINTS) if c <= max_eval]
    if not cps or cps[-1] != max_eval:
        cps.append(max_eval)
    has_nr = any(r.get("normalized_reward", "") != "" for r in rows)
    has_pop = any(r.get("p_optimum", "") != "" for r in rows)
    metric = "normalized_reward" if has_nr else "p_optimum" if has_pop else "best_f1"
    algs = sorted({r["algorithm"] for r in rows}, key=_alg_order)
    header = ["algorithm", "runs"] + [f"{metric}@{c}" for c in cps]
    table = []
    for a in algs:
        sub = [r for r in rows if r["algorithm"] == a]
        runs = len({r["seed"] for r in sub})
        line: list[Any] = [a, runs]
        for c in cps:
            line.append(_mean_sd([float(r[metric]) for r in sub
                                  if int(r["eval"]) == c and r.get(metric, "") != ""]))
        table.append(line)
    if has_nr and has_pop:
        for a in algs:
            sub = [r for r in rows if r["algorithm"] == a]
            table.append([f"{a} (p_optimum)", len({r["seed"] for r in sub})]
                         + [_mean_sd([float(r["p_optimum"]) for r in sub if int(r["eval"]) == c])
                            for c in cps])
    agg_header, agg_rows = aggregate(rows)
    plot_header = ["benchmark", "algorithm", "eval", "metric", "mean", "sd", "n_runs"]
    metrics = _metric_columns(list(rows[0]))
    plot_rows = []
    for line in agg_rows:
        rec = dict(zip(agg_header, line))
        for m in metrics:
            if rec[f"{m}_mean"] != "":
                plot_rows.append([bench, rec["algorithm"], rec["eval"], m, rec[f"{m}_mean"],
                                  rec[f"{m}_sd"], rec["n_runs"]])
    return Report(bench, header, table, plot_header, plot_rows)


def write_report(report: Report, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, report.plot_header, report.plot_rows)
    return path


def final_metric(rows: list[dict[str, str]], algorithm: str, metric: str) -> dict[int, float]:
    """Per-seed value of ``metric`` at the last evaluation."""
    last: dict[int, tuple[int, float]] = {}
    for r in rows:
        if r["algorithm"] != algorithm or r.get(metric, "") == "":
            continue
        s, e = int(r["seed"]), int(r["eval"])
        if s not in last or e > last[s][0]:
            last[s] = (e, float(r[metric]))
    return {s: v for s, (_, v) in sorted(last.items())}


def with_overrides(cfg: RunConfig, **changes: Any) -> RunConfig:
    changes = {k: v for k, v in changes.items() if v is not None}
    opt = dict(cfg.optimizer)
    for key in ("eta", "portfolio"):
        if key in changes:
            opt[key] = changes.pop(key)
    if "portfolio" in opt:
        opt["portfolio"] = [AcquisitionKind.parse(k).value for k in opt["portfolio"]]
    if "seeds" in changes and "replicates" not in changes:
        changes["replicates"] = len(changes["seeds"])
    return replace(cfg, optimizer=opt, **changes)


def state_for_seed(cfg: RunConfig, seed: int) -> OptimizerState:
    return OptimizerState.load(_campaign_dir(cfg) / f"state_seed{seed}.json")
