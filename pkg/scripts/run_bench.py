"""Run the benchmark on the full test bed or a seeded subsample.

Usage: python scripts/run_bench.py --out results/bench [--subset 64] [--scenarios 10000]
"""

import argparse
from pathlib import Path
import logging
import time

from lotflow.bench import BenchConfig, build_testbed, run_pivot, sample_cases, write_cases, write_ci, write_pivot


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--subset", type=int, default=None)
    ap.add_argument("--scenarios", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    bed = build_testbed()
    if args.subset:
        bed = sample_cases(bed, args.subset, args.seed)
    cfg = BenchConfig(scenarios=args.scenarios, seed=args.seed)
    t0 = time.perf_counter()
    report, results = run_pivot(bed, cfg, workers=args.workers)
    for metric in ("rmse", "mape"):
        write_pivot(report, out, metric)
    write_ci(report, out)
    write_cases(results, out, cfg.methods)
    general = report.general()
    print(f"{len(results)} cases in {time.perf_counter() - t0:.0f}s, failed {report.failed}")
    for m in cfg.methods:
        print(f"{m:8s} RMSE {general.rmse[m][0]:8.3f}  MAPE {general.mape[m][0]:7.2f}%")


if __name__ == "__main__":
    main()
