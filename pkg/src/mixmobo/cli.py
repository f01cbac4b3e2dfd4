"""``mixmobo`` command line: benchmark campaigns, ask/tell sessions and reports.

Exit codes: 0 success, 1 user error (bad config, protocol order, bad input),
2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .acquisition import AcquisitionKind
from .harness import (
    ConfigError,
    RunConfig,
    build_report,
    load_records,
    run_campaign,
    with_overrides,
    write_report,
)
from .optimizer import (
    STATE_SCHEMA_VERSION,
    OptimizerConfig,
    OptimizerState,
    PointMismatchError,
    ProtocolError,
    ask,
    extract_pareto_set,
    tell,
)
from .space import MixedSpace, MixedVector

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2

logger = logging.getLogger("mixmobo")


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UserError(f"{self.prog}: {message}")


def _int_list(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


def _acquisitions(text: str) -> tuple[str, ...]:
    return tuple(AcquisitionKind.parse(k.strip()).value for k in text.split(",") if k.strip())


def _read_json(path: str) -> Any:
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UserError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise UserError(f"{path} is not valid JSON: {exc}") from None


def _emit(obj: Any) -> None:
    print(json.dumps(obj, indent=2))


# -- run -------------------------------------------------------------------------------


def _run_config(args) -> RunConfig:
    doc: dict[str, Any] = {}
    if args.config:
        doc = _read_json(args.config)
        if not isinstance(doc, dict):
            raise UserError("run config must be a JSON object")
    if args.benchmark:
        doc["benchmark"] = args.benchmark
    if "benchmark" not in doc:
        raise UserError("a benchmark is required (--benchmark or the config file)")
    cfg = RunConfig.from_dict(doc)
    return with_overrides(
        cfg,
        budget=args.budget, n_init=args.init, q=args.q, replicates=args.replicates,
        seeds=args.seeds, noise_variance=args.noise_var, out=args.out, workers=args.workers,
        instance_seed=args.instance_seed, eta=args.eta, portfolio=args.acquisitions,
    )


def cmd_run(args) -> int:
    cfg = _run_config(args)
    res = run_campaign(cfg)
    if not res.completed_seeds:
        print("interrupted before any replicate finished", file=sys.stderr)
        return EXIT_USER
    rows = load_records([res.directory])
    print(build_report(rows).format())
    print(f"records: {res.directory}")
    if res.interrupted:
        print(f"interrupted: partial results for seeds {res.completed_seeds}", file=sys.stderr)
        return EXIT_USER
    return EXIT_OK


# -- session -------------------------------------------------------------------------------


def _load_state(path: str) -> OptimizerState:
    if not Path(path).exists():
        raise UserError(f"no session state at {path}; run 'session init' first")
    return OptimizerState.load(path)


def _point_table(space: MixedSpace, points: Sequence[MixedVector], values=None) -> str:
    head = ["#"] + [f"c{i}" for i in range(space.n_continuous)] + \
        [f"o{i}" for i in range(space.n_ordinal)] + [f"k{i}" for i in range(space.n_categorical)]
    rows = []
    for i, w in enumerate(points):
        rows.append([str(i)] + [f"{x:.6g}" for x in w.continuous] + [str(x) for x in w.ordinal]
                    + [str(x) for x in w.categorical])
    if values is not None:
        K = np.atleast_2d(values).shape[1]
        head += [f"f{k + 1}" for k in range(K)]
        for r, v in zip(rows, np.atleast_2d(values)):
            r.extend(f"{x:.6g}" for x in v)
    widths = [max(len(x) for x in col) for col in zip(head, *rows)]
    return "\n".join("  ".join(x.rjust(w) for x, w in zip(r, widths)) for r in [head, *rows])


def _session_config(args, doc: dict[str, Any]) -> tuple[MixedSpace, OptimizerConfig]:
    opt = dict(doc.get("optimizer", {}))
    if args.eta is not None:
        opt["eta"] = args.eta
    if args.acquisitions is not None:
        opt["portfolio"] = list(args.acquisitions)
    budget = args.budget if args.budget is not None else doc.get("budget", 250)
    n_init = args.init if args.init is not None else doc.get("n_init", 50)
    q = args.q if args.q is not None else doc.get("q", 1)
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    bench = args.benchmark or doc.get("benchmark")
    if bench:
        cfg = RunConfig(bench, budget=budget, n_init=n_init, q=q, replicates=1, optimizer=opt,
                        instance_seed=doc.get("instance_seed", 0))
        return cfg.make_benchmark().space, cfg.optimizer_config(seed)
    if "space" not in doc:
        raise UserError("session init needs --benchmark or a config document with a 'space'")
    if budget < n_init or (budget - n_init) % q:
        raise UserError(f"budget {budget} must be n_init {n_init} plus a multiple of q {q}")
    space = MixedSpace.from_dict(doc["space"])
    cfg = OptimizerConfig.from_dict(dict(opt, n_init=n_init, epochs=(budget - n_init) // q,
                                         batch_size=q, seed=seed))
    return space, cfg


def session_init(args) -> int:
    doc = _read_json(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise UserError("config document must be a JSON object")
    version = doc.get("schema_version", STATE_SCHEMA_VERSION)
    if version != STATE_SCHEMA_VERSION:
        raise UserError(f"unsupported config schema_version {version!r}")
    if Path(args.state).exists() and not args.force:
        raise UserError(f"{args.state} exists; pass --force to overwrite")
    space, cfg = _session_config(args, doc)
    OptimizerState.new(space, cfg).save(args.state)
    print(f"initialized {args.state}: dim {space.dim}, budget {cfg.budget}, batch {cfg.batch_size}")
    return EXIT_OK


def session_ask(args) -> int:
    st = _load_state(args.state)
    if st.pending is not None:
        raise ProtocolError("an ask is already outstanding; tell its values first")
    if st.done:
        raise ProtocolError("evaluation budget exhausted")
    points = ask(st)
    st.save(args.state)
    print(_point_table(st.space, points))
    _emit({"epoch": st.epoch + (1 if st.initialized else 0),
           "points": [w.to_dict() for w in points]})
    return EXIT_OK


def _parse_values(doc: Any) -> list:
    if isinstance(doc, dict):
        doc = doc.get("values")
    if not isinstance(doc, list):
        raise UserError("values must be a JSON list (one entry per asked point) or {'values': [...]}")
    return doc


def session_tell(args) -> int:
    st = _load_state(args.state)
    if st.pending is None:
        raise ProtocolError("no outstanding ask")
    values = _parse_values(_read_json(args.values))
    tell(st, st.pending.selected, values)
    st.save(args.state)
    print(f"recorded {len(values)} evaluations; total {st.n_evaluations}")
    return EXIT_OK


def session_status(args) -> int:
    st = _load_state(args.state)
    status = {
        "evaluations": st.n_evaluations,
        "budget": st.config.budget,
        "epoch": st.epoch,
        "epochs": st.config.epochs,
        "pending": 0 if st.pending is None else len(st.pending.selected),
        "done": st.done,
    }
    if st.trace:
        status["last_probabilities"] = dict(zip(st.trace[-1]["acquisitions"],
                                                st.trace[-1]["probabilities"]))
    for k, v in status.items():
        print(f"{k}: {v}")
    return EXIT_OK


def session_result(args) -> int:
    st = _load_state(args.state)
    if not st.initialized:
        raise ProtocolError("no evaluations recorded yet")
    ps = extract_pareto_set(st.dataset)
    print(_point_table(st.space, ps.points, ps.values))
    _emit({"points": [w.to_dict() for w in ps.points], "values": np.asarray(ps.values).tolist()})
    return EXIT_OK


# -- report ---------------------------------------------------------------------------------


def cmd_report(args) -> int:
    rows = load_records(args.records)
    report = build_report(rows, args.checkpoints)
    print(report.format())
    if args.out:
        print(f"plot data: {write_report(report, args.out)}")
    return EXIT_OK


# -- entry point ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mixmobo", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="MixMOBO vs random sampling on a benchmark, per seed")
    r.add_argument("--benchmark")
    r.add_argument("--config", help="JSON run config; flags override its keys")
    r.add_argument("--budget", type=int)
    r.add_argument("--init", type=int)
    r.add_argument("--q", type=int)
    r.add_argument("--seeds", type=_int_list, help="e.g. 0-9 or 1,4,7")
    r.add_argument("--replicates", type=int)
    r.add_argument("--eta", type=float)
    r.add_argument("--acquisitions", type=_acquisitions, help="comma list of EI,PI,UCB,SMC")
    r.add_argument("--noise-var", type=float)
    r.add_argument("--instance-seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--out", help="output directory (default $MIXMOBO_OUT_DIR or ./mixmobo_runs)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("session", help="ask/tell against an external black box")
    ss = s.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name, func in (("init", session_init), ("ask", session_ask), ("tell", session_tell),
                       ("status", session_status), ("result", session_result)):
        a = ss.add_parser(name)
        a.add_argument("--state", required=True)
        a.set_defaults(func=func)
        if name == "init":
            a.add_argument("--config", help="JSON document with 'space' and/or 'optimizer'")
            a.add_argument("--benchmark", help="take the space from a registered benchmark")
            a.add_argument("--budget", type=int)
            a.add_argument("--init", type=int)
            a.add_argument("--q", type=int)
            a.add_argument("--seed", type=int)
            a.add_argument("--eta", type=float)
            a.add_argument("--acquisitions", type=_acquisitions)
            a.add_argument("--force", action="store_true")
        if name == "tell":
            a.add_argument("--values", required=True, help="JSON file with the values, or - for stdin")

    rep = sub.add_parser("report", help="summarize run records")
    rep.add_argument("records", nargs="+", help="run CSVs or campaign directories")
    rep.add_argument("--checkpoints", type=_int_list)
    rep.add_argument("--out", help="write plot-ready long-format CSV here")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UserError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USER
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UserError, ConfigError, ProtocolError, PointMismatchError, ValueError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # pragma: no cover - safety net for the exit-code contract
        logger.exception("internal error")
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
