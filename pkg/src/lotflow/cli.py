"""Command-line interface: ``lotflow {sdp,tune,heuristic,simulate,bench,stability}``.

Exit codes: 0 success, 1 partial benchmark failure, 2 bad input or flags,
3 state explosion in the SDP, 4 output location not writable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Sequence

import numpy as np

from lotflow import __version__
from lotflow.model import Instance, SchemaError

EXIT_PARTIAL = 1
EXIT_SCHEMA = 2
EXIT_EXPLOSION = 3
EXIT_UNWRITABLE = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def fmt_money(x: float) -> str:
    d = Decimal(repr(float(x))).quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN)
    return str(d + 0)  # "+ 0" folds -0.0000 into 0.0000


def fmt_pct(x: float) -> str:
    return str(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN) + 0)


def _tuple(xs) -> str:
    return "(" + ",".join(str(int(x)) for x in xs) + ")"


def _load_instance(path: str) -> Instance:
    try:
        return Instance.load(path)
    except FileNotFoundError:
        raise CliError(f"instance file not found: {path}", EXIT_SCHEMA) from None
    except SchemaError as exc:
        where = f" (field: {exc.field})" if exc.field else ""
        raise CliError(f"{path}: {exc}{where}", EXIT_SCHEMA) from None


def load_paths(path: str, T: int) -> np.ndarray:
    """Demand paths from JSON (list of lists) or one whitespace/comma separated path per line."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read paths file: {exc}", EXIT_SCHEMA) from None
    try:
        rows = json.loads(text)
    except json.JSONDecodeError:
        rows = [line.replace(",", " ").split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    try:
        arr = np.asarray([[int(x) for x in row] for row in rows], dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad paths file: {exc}", EXIT_SCHEMA) from None
    if arr.ndim != 2 or arr.shape[1] != T or (arr < 0).any():
        raise CliError(f"paths must be nonnegative integer rows of length T={T}", EXIT_SCHEMA)
    return arr


def _writable_file(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with p.open("a"):
            pass
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_UNWRITABLE) from None
    return p


def _writable_dir(path: str) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
        probe = p / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"cannot write to {path}: {exc}", EXIT_UNWRITABLE) from None
    return p


def _write_manifest(path: Path | None, args: argparse.Namespace, argv: Sequence[str], outputs: list) -> None:
    if path is None:
        return
    doc = {
        "command": args.command,
        "argv": list(argv),
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "outputs": [str(o) for o in outputs if o is not None],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_sdp(args, argv) -> int:
    from lotflow.sdp import StateExplosionError, replay, solve

    inst = _load_instance(args.instance)
    out = _writable_file(args.out)
    manifest = _writable_file(args.manifest)
    paths = load_paths(args.replay, inst.T) if args.replay else None
    kw = {"state_cap": args.state_cap} if args.state_cap else {}
    try:
        sol = solve(inst, args.method, **kw)
    except StateExplosionError as exc:
        raise CliError(str(exc), EXIT_EXPLOSION) from None
    print(fmt_money(sol.value))
    if paths is not None:
        for path in paths:
            orders, inc = replay(sol, inst, path)
            print(f"D={_tuple(path)} Q={_tuple(orders)} increment={fmt_money(inc)}")
    if out:
        sol.dump(out)
    _write_manifest(manifest, args, argv, [out])
    return 0


def _ga_config(args):
    from lotflow.ga import GaConfig

    kw = {}
    for f in fields(GaConfig):
        val = getattr(args, f"ga_{f.name}", None)
        if val is not None:
            kw[f.name] = val
    kw["seed"] = args.seed
    try:
        return GaConfig(**kw)
    except ValueError as exc:
        raise CliError(f"bad GA configuration: {exc}", EXIT_SCHEMA) from None


def cmd_tune(args, argv) -> int:
    from lotflow.ga import tune
    from lotflow.policies import EvalReport

    inst = _load_instance(args.instance)
    out = _writable_file(args.out)
    report_path = _writable_file(args.report)
    manifest = _writable_file(args.manifest)
    cfg = _ga_config(args)
    res = tune(inst, args.policy, cfg)
    print(json.dumps(res.policy.to_dict()))
    print(f"training fitness {fmt_money(res.fitness)} after {res.generations} generations")
    print(EvalReport.CSV_HEADER)
    print(res.report.csv_row())
    if out:
        res.policy.dump(out)
    if report_path:
        report_path.write_text(EvalReport.CSV_HEADER + "\n" + res.report.csv_row() + "\n")
    _write_manifest(manifest, args, argv, [out, report_path])
    return 0


def cmd_heuristic(args, argv) -> int:
    from lotflow.demand import generate_scenarios
    from lotflow.ga import BENCHMARK_SEED_OFFSET
    from lotflow.heuristic import HeuristicConfig, run

    inst = _load_instance(args.instance)
    manifest = _writable_file(args.manifest)
    try:
        cfg = HeuristicConfig(samples=args.samples, step=args.step, qmax=args.qmax,
                              replan=args.replan, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from None
    scen = generate_scenarios(inst, args.scenarios, BENCHMARK_SEED_OFFSET + args.seed)
    res = run(inst, cfg, scen)
    print(f"mean {fmt_money(res.report.mean)} ci95 {fmt_money(res.report.ci95)} n {res.report.n}")
    if args.paths:
        paths = load_paths(args.paths, inst.T)
        per = run(inst, cfg, paths)
        for path, orders, inc in zip(paths, per.orders, per.report.increments):
            print(f"D={_tuple(path)} Q={_tuple(orders)} increment={fmt_money(inc)}")
    _write_manifest(manifest, args, argv, [])
    return 0


def cmd_simulate(args, argv) -> int:
    from lotflow.demand import generate_scenarios
    from lotflow.policies import EvalReport, evaluate, evaluate_path, load_policy

    inst = _load_instance(args.instance)
    try:
        policy = load_policy(args.policy)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read policy file: {exc}", EXIT_SCHEMA) from None
    except SchemaError as exc:
        raise CliError(f"{args.policy}: {exc}", EXIT_SCHEMA) from None
    if getattr(policy, "T", inst.T) != inst.T:
        raise CliError(f"policy horizon does not match T={inst.T}", EXIT_SCHEMA)
    manifest = _writable_file(args.manifest)
    report = evaluate(inst, policy, generate_scenarios(inst, args.scenarios, args.seed))
    print(EvalReport.CSV_HEADER)
    print(report.csv_row())
    if args.paths:
        for path in load_paths(args.paths, inst.T):
            print(f"D={_tuple(path)} increment={fmt_money(evaluate_path(inst, policy, path))}")
    _write_manifest(manifest, args, argv, [])
    return 0


def _threads(args) -> int:
    from lotflow.demand import default_threads

    return args.threads or default_threads()


def cmd_bench(args, argv) -> int:
    from lotflow import bench

    out = _writable_dir(args.out)
    bed = bench.build_testbed()
    cases = bench.sample_cases(bed, args.subset, args.seed) if args.subset else bed
    methods = tuple(args.methods) if args.methods else bench.METHODS
    cfg = bench.BenchConfig(scenarios=args.scenarios, seed=args.seed, methods=methods, ga=_ga_config(args))
    report, results = bench.run_pivot(cases, cfg, workers=_threads(args))
    outputs = [
        bench.write_pivot(report, out, "rmse"),
        bench.write_pivot(report, out, "mape"),
        bench.write_ci(report, out),
        bench.write_cases(results, out, methods),
    ]
    bench.write_manifest(out, "bench", cfg, cases, outputs, {"argv": list(argv)})
    g = report.general() if any(r.ok for r in results) else None
    if g is not None:
        print("method,rmse,mape")
        for m in methods:
            print(f"{m},{fmt_money(g.rmse[m][0])},{fmt_pct(g.mape[m][0])}")
    if report.failed:
        print(f"{len(report.failed)} case(s) failed: {report.failed}", file=sys.stderr)
        return EXIT_PARTIAL
    return 0


def cmd_stability(args, argv) -> int:
    from lotflow import bench

    out = _writable_dir(args.out)
    cases = bench.sample_cases(bench.build_testbed(), args.cases, args.seed)
    cfg = bench.BenchConfig(scenarios=args.scenarios, seed=args.seed, ga=_ga_config(args))
    rows = bench.stability_test(cases, sizes=args.sizes, runs=args.runs, seed=args.seed,
                                eval_scenarios=args.scenarios, ga=cfg.ga)
    path = bench.write_stability(rows, out)
    bench.write_manifest(out, "stability", cfg, cases, [path],
                         {"argv": list(argv), "sizes": list(args.sizes), "runs": args.runs})
    print(path.read_text(), end="")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_ga_flags(p: argparse.ArgumentParser) -> None:
    from lotflow.ga import GaConfig

    g = p.add_argument_group("genetic algorithm")
    for f in fields(GaConfig):
        if f.name == "seed":
            continue
        flag = "--" + f.name.replace("_", "-")
        kind = type(f.default)
        if f.name == "sqs_semantics":
            g.add_argument(flag, dest="ga_sqs_semantics", choices=("literal", "cap"))
        else:
            g.add_argument(flag, dest=f"ga_{f.name}", type=kind, metavar=kind.__name__.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lotflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lotflow {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="cap on worker threads (env LOTFLOW_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, manifest=True):
        if seed:
            p.add_argument("--seed", type=int, default=0)
        if manifest:
            p.add_argument("--manifest", help="write a run manifest (JSON) here")

    p = sub.add_parser("sdp", help="solve the stochastic dynamic program")
    p.add_argument("instance")
    p.add_argument("--method", choices=("auto", "exact", "grid"), default="auto")
    p.add_argument("--state-cap", type=int, default=None)
    p.add_argument("--replay", metavar="PATHS", help="file of demand paths to replay")
    p.add_argument("--out", help="write the solution dump (JSON)")
    common(p, seed=False)
    p.set_defaults(func=cmd_sdp)

    p = sub.add_parser("tune", help="tune a policy family with the genetic algorithm")
    p.add_argument("instance")
    p.add_argument("--policy", required=True, choices=("rq", "rs", "ss", "sqs"))
    p.add_argument("--out", help="write the tuned policy file")
    p.add_argument("--report", help="write the evaluation report CSV")
    _add_ga_flags(p)
    common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("heuristic", help="run the cycle heuristic")
    p.add_argument("instance")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--qmax", type=int, default=None)
    p.add_argument("--replan", choices=("cycle", "period"), default="cycle")
    p.add_argument("--scenarios", type=int, default=100_000)
    p.add_argument("--paths", help="file of demand paths to report decisions for")
    common(p)
    p.set_defaults(func=cmd_heuristic)

    p = sub.add_parser("simulate", help="evaluate a policy file by simulation")
    p.add_argument("instance")
    p.add_argument("policy")
    p.add_argument("--scenarios", type=int, default=100_000)
    p.add_argument("--paths", help="file of demand paths to evaluate individually")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="run the benchmark test bed")
    p.add_argument("--scenarios", type=int, default=100_000)
    p.add_argument("--subset", type=int, default=None, help="seeded k-case subsample")
    p.add_argument("--methods", nargs="+", choices=("GA-sQS", "GA-sS", "GA-RS", "Sim-opt", "GA-RQ"))
    p.add_argument("--out", required=True)
    _add_ga_flags(p)
    common(p, manifest=False)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stability", help="in-sample and out-of-sample stability of the GA")
    p.add_argument("--cases", type=int, default=32)
    p.add_argument("--sizes", type=int, nargs="+", default=[100, 500, 1000, 1500])
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--scenarios", type=int, default=100_000)
    p.add_argument("--out", required=True)
    _add_ga_flags(p)
    common(p, manifest=False)
    p.set_defaults(func=cmd_stability)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("lotflow: error: --threads must be >= 1", file=sys.stderr)
            return EXIT_SCHEMA
        os.environ["LOTFLOW_THREADS"] = str(args.threads)
    try:
        return args.func(args, argv)
    except CliError as exc:
        print(f"lotflow: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
