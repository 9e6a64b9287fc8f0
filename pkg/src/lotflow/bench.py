"""Benchmark test bed, per-case pipeline, error metrics and pivot tables."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from lotflow import __version__
from lotflow.demand import PATTERNS, DemandModel, generate_scenarios
from lotflow.ga import GaConfig, tune
from lotflow.heuristic import HeuristicConfig
from lotflow.heuristic import run as run_heuristic
from lotflow.model import Instance
from lotflow.sdp import solve

log = logging.getLogger(__name__)

LEVELS: dict[str, tuple[float, float]] = {
    "B0": (0.0, 20.0),
    "p": (5.0, 10.0),
    "a": (10.0, 15.0),
    "v": (1.0, 2.0),
    "pi": (2.0, 4.0),
    "b": (0.05, 0.2),
}
DIMENSIONS = ("B0", "p", "a", "v", "pi", "b", "pattern")
DIMENSION_LABELS = {
    "B0": "Initial capital",
    "p": "Selling price",
    "a": "Fixed order cost",
    "v": "Unit variable cost",
    "pi": "Penalty cost",
    "b": "Interest rate",
    "pattern": "Demand pattern",
}
GA_METHODS = {"GA-sQS": "sqs", "GA-sS": "ss", "GA-RS": "rs", "GA-RQ": "rq"}
METHODS = ("GA-sQS", "GA-sS", "GA-RS", "Sim-opt", "GA-RQ")


@dataclass(frozen=True)
class Case:
    index: int
    pattern: str
    B0: float
    p: float
    a: float
    v: float
    pi: float
    b: float

    def instance(self) -> Instance:
        return Instance(
            T=6, B0=self.B0, p=self.p, a=self.a, v=self.v, h=1.0, pi=self.pi, b=self.b,
            demand=[DemandModel.poisson(m) for m in PATTERNS[self.pattern]],
        )

    def tag(self, dimension: str):
        return getattr(self, dimension)


def build_testbed() -> list[Case]:
    """All 640 combinations of demand pattern and the six two-level parameters."""
    combos = itertools.product(PATTERNS, *(LEVELS[k] for k in ("B0", "p", "a", "v", "pi", "b")))
    return [Case(i, *combo) for i, combo in enumerate(combos)]


def sample_cases(bed: Sequence[Case], k: int, seed: int) -> list[Case]:
    """Seeded uniform sample without replacement, returned in test-bed order."""
    if not 1 <= k <= len(bed):
        raise ValueError(f"subset size must lie in 1..{len(bed)}")
    idx = np.random.default_rng(seed).choice(len(bed), size=k, replace=False)
    return [bed[i] for i in sorted(idx)]


def case_seed(seed: int, index: int, stream: int = 0) -> int:
    return int(np.random.SeedSequence([seed, index, stream]).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# metrics


def rmse(optimal: Sequence[float], achieved: Sequence[float]) -> float:
    o, a = np.asarray(optimal, dtype=float), np.asarray(achieved, dtype=float)
    if o.shape != a.shape or o.size == 0:
        raise ValueError("rmse needs equal-length, nonempty inputs")
    return float(np.sqrt(np.mean((o - a) ** 2)))


@dataclass
class MapeResult:
    value: float
    excluded: int

    def __float__(self) -> float:
        return self.value


def mape(optimal: Sequence[float], achieved: Sequence[float], zero_tol: float = 1e-9) -> MapeResult:
    """Mean absolute percentage error; cases with a near-zero optimum are skipped."""
    o, a = np.asarray(optimal, dtype=float), np.asarray(achieved, dtype=float)
    if o.shape != a.shape:
        raise ValueError("mape needs equal-length inputs")
    keep = np.abs(o) >= zero_tol
    excluded = int((~keep).sum())
    if excluded:
        log.warning("mape: %d case(s) with |optimal| < %g excluded", excluded, zero_tol)
    if not keep.any():
        return MapeResult(math.nan, excluded)
    return MapeResult(float(100.0 * np.mean(np.abs(o[keep] - a[keep]) / np.abs(o[keep]))), excluded)


def confidence_interval(sample: Sequence[float]) -> tuple[float, float]:
    """Mean and 95% normal half-width of a sample."""
    x = np.asarray(sample, dtype=float)
    if x.size < 2:
        raise ValueError("a confidence interval needs at least two observations")
    return float(x.mean()), float(1.96 * x.std(ddof=1) / math.sqrt(x.size))


def rmse_interval(optimal, achieved) -> tuple[float, float]:
    """RMSE and its half-width from the delta method on squared errors."""
    sq = (np.asarray(optimal, dtype=float) - np.asarray(achieved, dtype=float)) ** 2
    value = float(np.sqrt(sq.mean()))
    if sq.size < 2 or value == 0:
        return value, 0.0
    half = 1.96 * sq.std(ddof=1) / math.sqrt(sq.size) / (2 * value)
    return value, float(half)


def mape_interval(optimal, achieved, zero_tol: float = 1e-9) -> tuple[float, float]:
    o, a = np.asarray(optimal, dtype=float), np.asarray(achieved, dtype=float)
    keep = np.abs(o) >= zero_tol
    pct = 100.0 * np.abs(o[keep] - a[keep]) / np.abs(o[keep])
    if pct.size < 2:
        return (float(pct.mean()) if pct.size else math.nan), 0.0
    return confidence_interval(pct)


# ---------------------------------------------------------------------------
# per-case pipeline


@dataclass
class BenchConfig:
    scenarios: int = 100_000
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    ga: GaConfig = field(default_factory=GaConfig)
    heuristic: HeuristicConfig = field(default_factory=HeuristicConfig)
    sdp_method: str = "grid"

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenarios": self.scenarios,
            "seed": self.seed,
            "methods": list(self.methods),
            "ga": self.ga.to_dict(),
            "heuristic": asdict(self.heuristic),
            "sdp_method": self.sdp_method,
        }


@dataclass
class CaseResult:
    case: Case
    optimal: float | None
    means: dict[str, float] = field(default_factory=dict)
    ci95: dict[str, float] = field(default_factory=dict)
    seconds: dict[str, float] = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_case(case: Case, cfg: BenchConfig) -> CaseResult:
    inst = case.instance()
    res = CaseResult(case, None)
    try:
        t0 = time.perf_counter()
        res.optimal = solve(inst, cfg.sdp_method).value
        res.seconds["SDP"] = time.perf_counter() - t0
        bench = generate_scenarios(inst, cfg.scenarios, case_seed(cfg.seed, case.index, 1))
        for method in cfg.methods:
            t0 = time.perf_counter()
            if method in GA_METHODS:
                ga_cfg = GaConfig(**{**cfg.ga.to_dict(), "seed": case_seed(cfg.seed, case.index, 2)})
                report = tune(inst, GA_METHODS[method], ga_cfg, benchmark=bench).report
            elif method == "Sim-opt":
                h = HeuristicConfig(**{**asdict(cfg.heuristic), "seed": case_seed(cfg.seed, case.index, 3)})
                report = run_heuristic(inst, h, bench).report
            else:
                raise ValueError(f"unknown method {method!r}")
            res.means[method] = report.mean
            res.ci95[method] = report.ci95
            res.seconds[method] = time.perf_counter() - t0
    except Exception as exc:  # recorded per case, the run continues
        log.exception("case %d failed", case.index)
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def run_cases(cases: Sequence[Case], cfg: BenchConfig, workers: int = 1) -> list[CaseResult]:
    if workers <= 1:
        return [run_case(c, cfg) for c in cases]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(run_case, cases, itertools.repeat(cfg)))


# ---------------------------------------------------------------------------
# pivot tables


@dataclass
class PivotRow:
    dimension: str
    level: Any
    cases: int
    rmse: dict[str, tuple[float, float]]
    mape: dict[str, tuple[float, float]]


@dataclass
class PivotReport:
    methods: tuple[str, ...]
    rows: list[PivotRow]
    seconds: dict[str, float]
    failed: list[int]

    def general(self) -> PivotRow:
        return next(r for r in self.rows if r.dimension == "General")


def pivot(results: Sequence[CaseResult], methods: Sequence[str]) -> PivotReport:
    good = [r for r in results if r.ok]
    methods = tuple(methods)

    def row(dimension, level, group):
        opt = [r.optimal for r in group]
        return PivotRow(
            dimension,
            level,
            len(group),
            {m: rmse_interval(opt, [r.means[m] for r in group]) for m in methods},
            {m: mape_interval(opt, [r.means[m] for r in group]) for m in methods},
        )

    rows = []
    for dim in DIMENSIONS:
        levels = sorted({r.case.tag(dim) for r in good}, key=lambda x: (str(type(x)), x))
        if dim == "pattern":
            levels = [p for p in PATTERNS if p in levels]
        for level in levels:
            rows.append(row(dim, level, [r for r in good if r.case.tag(dim) == level]))
    if good:
        rows.append(row("General", "", good))
    names = ("SDP",) + methods
    seconds = {m: float(np.mean([r.seconds.get(m, math.nan) for r in good])) if good else math.nan for m in names}
    return PivotReport(methods, rows, seconds, [r.case.index for r in results if not r.ok])


def run_pivot(bed: Sequence[Case], cfg: BenchConfig, workers: int = 1) -> tuple[PivotReport, list[CaseResult]]:
    results = run_cases(bed, cfg, workers)
    return pivot(results, cfg.methods), results


def _level_label(row: PivotRow) -> str:
    if row.dimension == "General":
        return "General"
    if row.dimension == "pattern":
        return str(row.level)
    return f"{row.level:g}"


def write_pivot(report: PivotReport, out: Path, metric: str) -> Path:
    path = out / f"pivot_{metric}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Parameter", "Value", "Cases", *report.methods])
        for r in report.rows:
            fmt = "{:.4f}" if metric == "rmse" else "{:.2f}"
            vals = getattr(r, metric)
            w.writerow([DIMENSION_LABELS.get(r.dimension, r.dimension), _level_label(r), r.cases,
                        *(fmt.format(vals[m][0]) for m in report.methods)])
        w.writerow(["Average time (s)", "", "", *(f"{report.seconds[m]:.4f}" for m in report.methods)])
    return path


def write_ci(report: PivotReport, out: Path) -> Path:
    path = out / "pivot_ci.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Metric", "Parameter", "Value", "Cases", *report.methods])
        for metric, fmt in (("rmse", "{:.4f} ± {:.4f}"), ("mape", "{:.2f} ± {:.2f}")):
            for r in report.rows:
                vals = getattr(r, metric)
                w.writerow([metric.upper(), DIMENSION_LABELS.get(r.dimension, r.dimension), _level_label(r),
                            r.cases, *(fmt.format(*vals[m]) for m in report.methods)])
    return path


def write_cases(results: Sequence[CaseResult], out: Path, methods: Sequence[str]) -> Path:
    path = out / "cases.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "pattern", "B0", "p", "a", "v", "pi", "b", "SDP", *methods, "error"])
        for r in results:
            c = r.case
            means = [f"{r.means[m]:.4f}" if m in r.means else "" for m in methods]
            opt = "" if r.optimal is None else f"{r.optimal:.4f}"
            w.writerow([c.index, c.pattern, c.B0, c.p, c.a, c.v, c.pi, c.b, opt, *means, r.error or ""])
    return path


def write_manifest(out: Path, command: str, cfg: BenchConfig, cases: Sequence[Case],
                   outputs: Iterable[Path], extra: dict | None = None) -> Path:
    path = out / "manifest.json"
    doc = {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "cases": [c.index for c in cases],
        "outputs": sorted(p.name for p in outputs),
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


# ---------------------------------------------------------------------------
# stability


STABILITY_SIZES = (100, 500, 1000, 1500)
STABILITY_FAMILIES = ("sqs", "ss", "rs", "rq")


@dataclass
class StabilityRow:
    size: int
    test: str  # "in-sample" or "out-of-sample"
    statistic: str  # "STD" or "RMSE"
    values: dict[str, float]


def stability_test(cases: Sequence[Case], sizes: Sequence[int] = STABILITY_SIZES, runs: int = 10,
                   seed: int = 0, families: Sequence[str] = STABILITY_FAMILIES,
                   eval_scenarios: int = 100_000, ga: GaConfig | None = None,
                   sdp_method: str = "grid", seeds: Sequence[int] | None = None) -> list[StabilityRow]:
    """Spread of GA results over independent training sets of each size.

    For each case, size and family the GA is run ``runs`` times on fresh
    training sets. STD is the sample standard deviation of the resulting
    fitness values and RMSE their error against the case's SDP optimum; both
    are averaged over cases. ``seeds`` overrides the per-run training seeds.
    """
    ga = ga or GaConfig()
    # acc[(size, test, stat)][family] -> list over cases
    acc: dict[tuple[int, str, str], dict[str, list[float]]] = {}
    for case in cases:
        inst = case.instance()
        opt = solve(inst, sdp_method).value
        bench = generate_scenarios(inst, eval_scenarios, case_seed(seed, case.index, 1))
        for size in sizes:
            for fam in families:
                ins, outs = [], []
                for run_i in range(runs):
                    s = seeds[run_i] if seeds is not None else case_seed(seed, case.index, 100 + run_i)
                    cfg = GaConfig(**{**ga.to_dict(), "seed": s, "train_scenarios": size})
                    res = tune(inst, fam, cfg, benchmark=bench)
                    ins.append(res.fitness)
                    outs.append(res.report.mean)
                for test, vals in (("in-sample", ins), ("out-of-sample", outs)):
                    v = np.asarray(vals)
                    identical = bool(np.all(v == v[0]))
                    std = 0.0 if identical or len(v) < 2 else float(v.std(ddof=1))
                    acc.setdefault((size, test, "STD"), {}).setdefault(fam, []).append(std)
                    acc.setdefault((size, test, "RMSE"), {}).setdefault(fam, []).append(rmse([opt] * len(v), v))
    rows = []
    for size in sizes:
        for test in ("in-sample", "out-of-sample"):
            for stat in ("STD", "RMSE"):
                per = acc[(size, test, stat)]
                rows.append(StabilityRow(size, test, stat, {f: float(np.mean(per[f])) for f in families}))
    return rows


def write_stability(rows: Sequence[StabilityRow], out: Path, families: Sequence[str] = STABILITY_FAMILIES) -> Path:
    names = {"sqs": "(s,Qbar,S)", "ss": "(s,S)", "rs": "(R,S)", "rq": "(R,Q)"}
    path = out / "stability.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Scenarios", "Test", "Statistic", *(names.get(f, f) for f in families)])
        for r in rows:
            w.writerow([r.size, r.test, r.statistic, *(f"{r.values[f]:.4f}" for f in families)])
    return path
