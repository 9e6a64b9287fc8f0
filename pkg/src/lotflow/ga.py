"""Real-coded genetic algorithm for tuning parametric policies.

The operator set mirrors the classic MATLAB ``ga`` configuration: rank
scaling with score 1/sqrt(rank), roulette selection, elitism, scattered
crossover, Gaussian mutation with a shrinking sigma, and ring migration
between subpopulations. Fitness is the mean final capital increment over
one fixed training scenario set (common random numbers).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np

from lotflow.demand import ScenarioSet, generate_scenarios
from lotflow.model import Instance
from lotflow.policies import (
    EvalReport,
    Policy,
    RQPolicy,
    RSPolicy,
    SQSPolicy,
    SSPolicy,
    evaluate,
    family_name,
    order_quantities,
    simulate,
)

# benchmark scenarios default to a stream far away from any training seed
BENCHMARK_SEED_OFFSET = 1 << 40


@dataclass
class GaConfig:
    population: int = 200
    elite: int = 10
    crossover_rate: float = 0.8
    sigma0: float = 10.0
    generations: int = 10_000
    tolerance: float = 1e-6
    stall: int = 50
    migration_interval: int = 20
    migration_fraction: float = 0.2
    subpopulations: int = 2
    train_scenarios: int = 1000
    eval_scenarios: int = 100_000
    seed: int = 0
    sqs_semantics: str = "literal"

    def __post_init__(self):
        if self.subpopulations < 1 or self.population % self.subpopulations:
            raise ValueError("population must split evenly into subpopulations")
        if self.population // self.subpopulations < 2 * self.elite:
            raise ValueError("each subpopulation must hold at least twice the elite count")
        if not 0 < self.crossover_rate <= 1:
            raise ValueError("crossover rate must lie in (0, 1]")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.generations < 1 or self.stall < 1:
            raise ValueError("generations and stall window must be >= 1")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in self.field_names()}


# ---------------------------------------------------------------------------
# operators


def rank_scale(raw_fitness) -> np.ndarray:
    """Score 1/sqrt(rank) with rank 1 the fittest; ties keep index order."""
    raw = np.asarray(raw_fitness, dtype=np.float64)
    if raw.size == 0:
        raise ValueError("rank_scale needs at least one individual")
    order = np.lexsort((np.arange(raw.size), -raw))
    scores = np.empty(raw.size)
    scores[order] = 1.0 / np.sqrt(np.arange(1, raw.size + 1))
    return scores


def mutation_sigma(k: int, sigma0: float, G: int) -> float:
    """Mutation scale after ``k`` generations: each step multiplies by (1 - k/G)."""
    if not 0 <= k <= G:
        raise ValueError("generation index must lie in 0..G")
    sigma = float(sigma0)
    for j in range(1, k + 1):
        sigma *= 1.0 - j / G
    return sigma


def scattered_crossover(parent1, parent2, mask) -> np.ndarray:
    p1, p2, m = np.asarray(parent1), np.asarray(parent2), np.asarray(mask, dtype=bool)
    if not p1.shape == p2.shape == m.shape:
        raise ValueError("parents and mask must have equal length")
    return np.where(m, p1, p2)


def roulette(scores: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn with probability proportional to score."""
    cum = np.cumsum(scores)
    return np.searchsorted(cum, rng.random(count) * cum[-1], side="right").clip(max=len(scores) - 1)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


# ---------------------------------------------------------------------------
# chromosome layout


@dataclass(frozen=True)
class Encoding:
    """Gene layout and bounds of one policy family for a given instance."""

    family: str
    T: int
    lower: np.ndarray
    upper: np.ndarray
    blocks: tuple[str, ...]
    semantics: str = "literal"

    @classmethod
    def for_family(cls, family: str, inst: Instance, semantics: str = "literal") -> "Encoding":
        family = family_name(family)
        dtot = float(sum(inst.max_demands))
        T = inst.T
        ranges = {
            "R": (0.0, 1.0),
            "Q": (0.0, dtot),
            "Qbar": (0.0, dtot),
            "s": (-dtot, dtot),
            "S": (-dtot, dtot),
        }
        blocks = {"RQ": ("R", "Q"), "RS": ("R", "S"), "sS": ("s", "S"), "sQS": ("s", "Qbar", "S")}[family]
        lower = np.concatenate([np.full(T, ranges[b][0]) for b in blocks])
        upper = np.concatenate([np.full(T, ranges[b][1]) for b in blocks])
        return cls(family, T, lower, upper, blocks, semantics)

    @property
    def length(self) -> int:
        return len(self.blocks) * self.T

    def decode(self, genes: np.ndarray) -> dict[str, np.ndarray]:
        """Integer (or boolean) parameter arrays of shape (P, T)."""
        genes = np.atleast_2d(genes)
        out = {}
        for i, name in enumerate(self.blocks):
            g = genes[:, i * self.T : (i + 1) * self.T]
            out[name] = g >= 0.5 if name == "R" else round_half_away(g)
        return out

    def to_policy(self, genes: np.ndarray) -> Policy:
        prm = {k: v[0] for k, v in self.decode(genes).items()}
        if self.family == "RQ":
            return RQPolicy(R=prm["R"], Q=prm["Q"])
        if self.family == "RS":
            return RSPolicy(R=prm["R"], S=prm["S"])
        if self.family == "sS":
            return SSPolicy(s=prm["s"], S=prm["S"])
        return SQSPolicy(s=prm["s"], Qbar=prm["Qbar"], S=prm["S"], semantics=self.semantics)

    def random(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self.lower + rng.random((count, self.length)) * (self.upper - self.lower)

    def clamp(self, genes: np.ndarray) -> np.ndarray:
        return np.clip(genes, self.lower, self.upper)


def population_fitness(inst: Instance, enc: Encoding, genes: np.ndarray, paths: np.ndarray) -> np.ndarray:
    """Mean training increment for every chromosome (rows of ``genes``)."""
    prm = enc.decode(genes)
    P = genes.shape[0]

    def decide(t, I, B):
        return order_quantities(enc.family, prm, t, I, enc.semantics)

    inc = simulate(inst, decide, np.broadcast_to(paths, (P,) + paths.shape))
    return inc.mean(axis=1)


# ---------------------------------------------------------------------------
# driver


@dataclass
class TuneResult:
    policy: Policy
    fitness: float
    report: EvalReport | None
    generations: int
    history: list[float] = field(default_factory=list, repr=False)
    genes: np.ndarray | None = field(default=None, repr=False)


def _next_generation(sub: np.ndarray, fit: np.ndarray, enc: Encoding, cfg: GaConfig,
                     sigma: float, rng: np.random.Generator) -> np.ndarray:
    size = len(sub)
    order = np.lexsort((np.arange(size), -fit))
    elites = sub[order[: cfg.elite]]
    n_children = size - cfg.elite
    n_cross = int(round(cfg.crossover_rate * n_children))
    n_mut = n_children - n_cross
    scores = rank_scale(fit)
    parents = roulette(scores, 2 * n_cross + n_mut, rng)
    p1 = sub[parents[:n_cross]]
    p2 = sub[parents[n_cross : 2 * n_cross]]
    mask = rng.random(p1.shape) < 0.5
    crossed = scattered_crossover(p1, p2, mask)
    base = sub[parents[2 * n_cross :]]
    mutated = enc.clamp(base + rng.normal(0.0, sigma, base.shape))
    return np.concatenate([elites, crossed, mutated])


def _migrate(subs: list[np.ndarray], fits: list[np.ndarray], count: int) -> None:
    """Best ``count`` of each subpopulation replace the worst of the next one (ring)."""
    k = len(subs)
    if k < 2 or count == 0:
        return
    tops = [np.lexsort((np.arange(len(f)), -f))[:count] for f in fits]
    best = [s[idx].copy() for s, idx in zip(subs, tops)]
    best_fit = [f[idx].copy() for f, idx in zip(fits, tops)]
    for i in range(k):
        j = (i + 1) % k
        worst = np.lexsort((np.arange(len(fits[j])), fits[j]))[:count]
        subs[j][worst] = best[i]
        fits[j][worst] = best_fit[i]


def tune(inst: Instance, family: str, cfg: GaConfig | None = None,
         training: ScenarioSet | None = None, benchmark: ScenarioSet | None = None,
         evaluate_best: bool = True) -> TuneResult:
    """Fit one policy family by maximizing mean increment over training scenarios."""
    cfg = cfg or GaConfig()
    enc = Encoding.for_family(family, inst, cfg.sqs_semantics)
    if training is None:
        training = generate_scenarios(inst, cfg.train_scenarios, cfg.seed)
    paths = training.paths
    rng = np.random.default_rng(cfg.seed)
    size = cfg.population // cfg.subpopulations
    n_migrants = int(round(cfg.migration_fraction * size))

    genes = enc.random(cfg.population, rng)
    fitness = population_fitness(inst, enc, genes, paths)
    history = [float(fitness.max())]
    sigma = cfg.sigma0
    gen = 0
    while gen < cfg.generations:
        gen += 1
        sigma *= 1.0 - gen / cfg.generations
        subs = [genes[i * size : (i + 1) * size] for i in range(cfg.subpopulations)]
        fits = [fitness[i * size : (i + 1) * size] for i in range(cfg.subpopulations)]
        children = [_next_generation(s, f, enc, cfg, sigma, rng) for s, f in zip(subs, fits)]
        genes = np.concatenate(children)
        fitness = population_fitness(inst, enc, genes, paths)
        if gen % cfg.migration_interval == 0:
            subs = [genes[i * size : (i + 1) * size] for i in range(cfg.subpopulations)]
            fits = [fitness[i * size : (i + 1) * size] for i in range(cfg.subpopulations)]
            _migrate(subs, fits, n_migrants)
        history.append(float(fitness.max()))
        if gen >= cfg.stall and (history[-1] - history[-1 - cfg.stall]) / cfg.stall < cfg.tolerance:
            break

    best = int(np.lexsort((np.arange(len(fitness)), -fitness))[0])
    policy = enc.to_policy(genes[best])
    report = None
    if evaluate_best:
        if benchmark is None:
            benchmark = generate_scenarios(inst, cfg.eval_scenarios, BENCHMARK_SEED_OFFSET + cfg.seed)
        report = evaluate(inst, policy, benchmark)
    return TuneResult(policy, float(fitness[best]), report, gen, history, genes[best].copy())
