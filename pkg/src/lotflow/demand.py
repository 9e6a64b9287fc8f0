"""Demand distributions, named demand patterns and scenario generation.

Scenario draws use numpy's Philox counter-based generator. Period ``t`` of
seed ``s`` is the keyed stream ``Philox(key=(s, t))``; scenario ``i`` takes the
first 64-bit word of counter block ``i`` and maps it to a uniform, which is
inverted through the period's (truncated) cdf. A draw therefore depends only
on ``(seed, i, t)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import stats

DEFAULT_EPS = 1e-6
_U64 = (1 << 64) - 1

PATTERNS: dict[str, tuple[int, ...]] = {
    "STA": (7, 7, 7, 7, 7, 7),
    "LCY1": (8, 7, 6, 5, 4, 3),
    "LCY2": (2, 3, 4, 5, 6, 7),
    "SIN1": (8, 5, 2, 1, 2, 5),
    "SIN2": (5, 6, 7, 8, 7, 6),
    "RAND": (8, 4, 1, 3, 1, 3),
    "EMP1": (1, 3, 8, 4, 8, 7),
    "EMP2": (1, 4, 7, 3, 5, 8),
    "EMP3": (3, 8, 4, 4, 6, 2),
    "EMP4": (3, 1, 5, 8, 4, 4),
}


class UnknownPatternError(KeyError):
    pass


def truncate_poisson(mean: float, eps: float = DEFAULT_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Poisson pmf on {0..K}, K the first point where the cdf reaches 1 - eps.

    The dropped tail mass is spread proportionally over the kept support.
    """
    if mean < 0:
        raise ValueError("Poisson mean must be nonnegative")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if mean == 0:
        return np.zeros(1, dtype=np.int64), np.ones(1)
    K = int(stats.poisson.ppf(1.0 - eps, mean))
    # ppf works on a float cdf; nudge K so the cumulative condition holds exactly
    while K > 0 and stats.poisson.cdf(K - 1, mean) >= 1.0 - eps:
        K -= 1
    while stats.poisson.cdf(K, mean) < 1.0 - eps:
        K += 1
    values = np.arange(K + 1, dtype=np.int64)
    probs = stats.poisson.pmf(values, mean)
    return values, probs / probs.sum()


def pattern_means(name: str) -> tuple[int, ...]:
    try:
        return PATTERNS[name]
    except KeyError:
        raise UnknownPatternError(f"unknown demand pattern {name!r}") from None


@dataclass(frozen=True)
class DemandModel:
    """One period's demand: an explicit pmf or a (truncated) Poisson."""

    kind: str
    values: tuple[int, ...] = ()
    probs: tuple[float, ...] = ()
    mean: float = 0.0
    eps: float = field(default=DEFAULT_EPS, compare=False)

    def __post_init__(self):
        if self.kind == "pmf":
            vals = tuple(int(v) for v in self.values)
            if not vals or len(vals) != len(self.probs):
                raise ValueError("pmf needs equally long, nonempty values and probs")
            if any(v != orig for v, orig in zip(vals, self.values)):
                raise ValueError("pmf values must be integers")
            if vals[0] < 0 or any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError("pmf values must be nonnegative and strictly increasing")
            if any(p < 0 for p in self.probs):
                raise ValueError("pmf probabilities must be nonnegative")
            if abs(math.fsum(self.probs) - 1.0) > 1e-12:
                raise ValueError("pmf probabilities must sum to 1")
            object.__setattr__(self, "values", vals)
            object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        elif self.kind == "poisson":
            if self.mean < 0:
                raise ValueError("Poisson mean must be nonnegative")
        else:
            raise ValueError(f"unknown demand kind {self.kind!r}")

    @classmethod
    def pmf(cls, values: Sequence[int], probs: Sequence[float]) -> "DemandModel":
        return cls("pmf", values=tuple(values), probs=tuple(probs))

    @classmethod
    def poisson(cls, mean: float, eps: float = DEFAULT_EPS) -> "DemandModel":
        return cls("poisson", mean=float(mean), eps=eps)

    @classmethod
    def constant(cls, value: int) -> "DemandModel":
        return cls.pmf([value], [1.0])

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "poisson":
            return truncate_poisson(self.mean, self.eps)
        return np.asarray(self.values, dtype=np.int64), np.asarray(self.probs)

    def expected(self) -> float:
        vals, probs = self.support()
        return float(vals @ probs)

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "poisson":
            return {"kind": "poisson", "mean": self.mean}
        return {"kind": "pmf", "values": list(self.values), "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "DemandModel":
        kind = doc["kind"]
        if kind == "poisson":
            extra = set(doc) - {"kind", "mean"}
            if extra:
                raise ValueError(f"unknown key(s) in poisson descriptor: {sorted(extra)}")
            return cls.poisson(float(doc["mean"]))
        if kind == "pmf":
            extra = set(doc) - {"kind", "values", "probs"}
            if extra:
                raise ValueError(f"unknown key(s) in pmf descriptor: {sorted(extra)}")
            return cls.pmf(doc["values"], doc["probs"])
        raise ValueError(f"unknown demand kind {kind!r}")


@dataclass(frozen=True)
class ScenarioSet:
    seed: int
    n: int
    paths: np.ndarray  # (n, T) int64

    @property
    def T(self) -> int:
        return self.paths.shape[1]

    def __len__(self) -> int:
        return self.n


def _uniforms(seed: int, t: int, start: int, stop: int) -> np.ndarray:
    bg = np.random.Philox(key=[seed & _U64, t], counter=start)
    words = bg.random_raw(4 * (stop - start))[::4]
    return (words >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _draw(model: DemandModel, u: np.ndarray) -> np.ndarray:
    values, probs = model.support()
    cdf = np.cumsum(probs)
    idx = np.searchsorted(cdf, u, side="right")
    return values[np.minimum(idx, len(values) - 1)]


def draw_block(demand: Sequence[DemandModel], seed: int, start: int, stop: int) -> np.ndarray:
    """Demand paths for scenario indices ``start..stop-1``."""
    out = np.empty((stop - start, len(demand)), dtype=np.int64)
    for t, model in enumerate(demand, start=1):
        out[:, t - 1] = _draw(model, _uniforms(seed, t, start, stop))
    return out


def default_threads() -> int:
    env = os.environ.get("LOTFLOW_THREADS")
    return max(1, int(env)) if env else 1


def generate_scenarios(inst, n: int, seed: int, threads: int | None = None) -> ScenarioSet:
    if n < 1:
        raise ValueError("scenario count must be >= 1")
    threads = threads or default_threads()
    if threads == 1:
        return ScenarioSet(seed, n, draw_block(inst.demand, seed, 0, n))
    edges = np.linspace(0, n, threads + 1).astype(int)
    with ThreadPoolExecutor(threads) as pool:
        blocks = list(
            pool.map(lambda ab: draw_block(inst.demand, seed, ab[0], ab[1]), zip(edges, edges[1:]))
        )
    return ScenarioSet(seed, n, np.concatenate(blocks))
