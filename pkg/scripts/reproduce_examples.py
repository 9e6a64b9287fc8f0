"""Solve the worked examples and print values, replays and tuned policies.

Usage: python scripts/reproduce_examples.py [--scenarios N]
"""

import argparse
from pathlib import Path

from lotflow.demand import generate_scenarios
from lotflow.ga import GaConfig, tune
from lotflow.heuristic import HeuristicConfig, run
from lotflow.model import Instance
from lotflow.policies import SDPPolicy, evaluate
from lotflow.sdp import replay, solve

DATA = Path(__file__).resolve().parents[1] / "data"
TABLE_PATHS = [(2, 1, 2), (2, 1, 1), (2, 2, 2), (1, 1, 2), (1, 2, 1)]
SIX_PERIOD = ["poisson_base", "poisson_capital20", "poisson_interest05", "poisson_margin3", "poisson_margin5"]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenarios", type=int, default=100_000)
    args = ap.parse_args()

    small = Instance.load(DATA / "two_point.json")
    sol = solve(small, "exact")
    print(f"two-point optimum {sol.value:.4f}")
    for path in TABLE_PATHS:
        orders, inc = replay(sol, small, path)
        print(f"  D={path} Q={tuple(orders)} increment={inc:.4f}")
    for family in ("ss", "sqs", "rs", "rq"):
        res = tune(small, family, GaConfig(eval_scenarios=args.scenarios))
        print(f"  GA {family}: {res.report.mean:.4f} +/- {res.report.ci95:.4f}  {res.policy.to_dict()}")
    heur = run(small, HeuristicConfig(), generate_scenarios(small, args.scenarios, 7))
    print(f"  heuristic: {heur.report.mean:.4f} +/- {heur.report.ci95:.4f}")

    for name in SIX_PERIOD:
        inst = Instance.load(DATA / f"{name}.json")
        sol = solve(inst, "auto")
        sim = evaluate(inst, SDPPolicy(sol), generate_scenarios(inst, args.scenarios, 0))
        orders, _ = replay(sol, inst, [3, 4, 3, 5, 4, 3])
        print(f"{name}: value {sol.value:.4f} simulated {sim.mean:.4f} +/- {sim.ci95:.4f} "
              f"mean-path Q={tuple(orders)}")


if __name__ == "__main__":
    main()
