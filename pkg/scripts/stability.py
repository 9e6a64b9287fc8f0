"""In-sample and out-of-sample stability of the GA over training-set sizes.

Usage: python scripts/stability.py --out results/stability [--cases 10] [--runs 10]
"""

import argparse
from pathlib import Path

from lotflow.bench import STABILITY_FAMILIES, STABILITY_SIZES, build_testbed, sample_cases, stability_test, write_stability


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--cases", type=int, default=10)
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--sizes", type=int, nargs="+", default=list(STABILITY_SIZES))
    ap.add_argument("--scenarios", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cases = sample_cases(build_testbed(), args.cases, args.seed)
    rows = stability_test(cases, sizes=tuple(args.sizes), runs=args.runs, seed=args.seed,
                          families=STABILITY_FAMILIES, eval_scenarios=args.scenarios)
    path = write_stability(rows, out, STABILITY_FAMILIES)
    print(path.read_text())


if __name__ == "__main__":
    main()
