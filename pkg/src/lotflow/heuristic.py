"""Silver-style simulation-optimization heuristic.

From the current state, the heuristic considers replenishment cycles (t, r)
of growing length. For each candidate it picks the order quantity that
maximizes the sample-average capital increment over the cycle, and it stops
growing as soon as the average increment per period drops. The sampled cycle
objective is concave in the order quantity for Q > 0, so the quantity search
is a ternary search on the integer lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from lotflow.demand import ScenarioSet, generate_scenarios
from lotflow.model import SCALE, Dynamics, Instance, State, to_ticks
from lotflow.policies import EvalReport

REPLAN_MODES = ("cycle", "period")


@dataclass
class HeuristicConfig:
    samples: int = 1000
    step: int = 1
    qmax: int | None = None
    replan: str = "cycle"
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if int(self.step) != self.step or self.step < 1:
            raise ValueError("step must be an integer >= 1")
        if self.qmax is not None and self.qmax < 0:
            raise ValueError("qmax must be nonnegative")
        if self.replan not in REPLAN_MODES:
            raise ValueError(f"replan must be one of {REPLAN_MODES}")


@dataclass(frozen=True)
class CyclePlan:
    t: int
    r: int
    Q: int
    increment: float  # best average increment per period


def _window(samples, t: int, r: int) -> np.ndarray:
    """Demand columns for periods t..r from a full-horizon set or a pre-sliced array."""
    paths = samples.paths if isinstance(samples, ScenarioSet) else np.asarray(samples)
    if isinstance(samples, ScenarioSet) or paths.shape[1] >= r:
        return paths[:, t - 1 : r]
    if paths.shape[1] < r - t + 1:
        raise ValueError("samples do not cover the cycle")
    return paths[:, : r - t + 1]


def cycle_increment(inst: Instance, t: int, r: int, Q, state: State, samples,
                    exact: bool = False):
    """Sample-average capital change over cycle (t, r) when ordering Q at t only.

    ``Q`` may be a scalar or an array of candidate quantities; the result has
    the same shape. Interest on negative capital is charged every period.
    """
    if not 1 <= t <= r <= inst.T:
        raise ValueError("need 1 <= t <= r <= T")
    demand = _window(samples, t, r)
    dyn = Dynamics(inst, exact=exact)
    Qs = np.atleast_1d(np.asarray(Q, dtype=np.int64))
    if (Qs < 0).any():
        raise ValueError("order quantity must be nonnegative")
    shape = (len(Qs), demand.shape[0])
    I = np.full(shape, state.I, dtype=np.int64)
    B0 = dyn.money(state.B)
    B = np.full(shape, B0)
    order = np.broadcast_to(Qs[:, None], shape)
    zero = np.zeros(shape, dtype=np.int64)
    for n in range(r - t + 1):
        I, B = dyn.step(I, B, order if n == 0 else zero, demand[:, n])
    total = dyn.to_currency(B - B0).mean(axis=1)
    return total if np.ndim(Q) else float(total[0])


def default_qmax(inst: Instance, t: int, state: State) -> int:
    return inst.remaining_max_demand(t) + state.I_minus


def best_quantity(inst: Instance, t: int, r: int, state: State, samples, step: int = 1,
                  qmax: int | None = None, exact: bool = False) -> tuple[int, float]:
    """Best order quantity on {0, step, 2*step, ...} and its cycle increment.

    Ties resolve to the smallest quantity.
    """
    qmax = default_qmax(inst, t, state) if qmax is None else qmax
    demand = _window(samples, t, r)
    cache: dict[int, float] = {}

    def f(k: int) -> float:
        if k not in cache:
            cache[k] = cycle_increment(inst, t, r, k * step, state, demand, exact)
        return cache[k]

    zero = f(0)
    K = qmax // step
    if K == 0:
        return 0, zero
    tol = 1e-9 * max(1.0, abs(zero))
    lo, hi = 1, K
    while hi - lo > 2:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        f1, f2 = f(m1), f(m2)
        if f1 < f2 - tol:
            lo = m1 + 1
        elif f1 > f2 + tol:
            hi = m2 - 1
        else:
            lo, hi = m1, m2
    k_best = max(range(lo, hi + 1), key=lambda k: (f(k), -k))
    # the near-optimal set of a concave function is an interval; walk to its left end
    target = f(k_best) - tol
    left, right = 1, k_best
    while left < right:
        mid = (left + right) // 2
        if f(mid) >= target:
            right = mid
        else:
            left = mid + 1
    k_best = left
    if zero >= f(k_best) - tol:
        return 0, zero
    return k_best * step, f(k_best)


def scan_quantity(inst: Instance, t: int, r: int, state: State, samples, step: int = 1,
                  qmax: int | None = None, exact: bool = False) -> tuple[int, float]:
    """Exhaustive counterpart of :func:`best_quantity` (reference only)."""
    qmax = default_qmax(inst, t, state) if qmax is None else qmax
    Qs = np.arange(0, qmax // step + 1) * step
    vals = cycle_increment(inst, t, r, Qs, state, _window(samples, t, r), exact)
    tol = 1e-9 * max(1.0, abs(vals[0]))
    best = int(np.argmax(vals >= vals.max() - tol))
    return int(Qs[best]), float(vals[best])


def plan(inst: Instance, t: int, state: State, cfg: HeuristicConfig | None = None,
         samples=None) -> CyclePlan:
    """Choose the next cycle length and order quantity from ``state`` at period t."""
    cfg = cfg or HeuristicConfig()
    if samples is None:
        samples = planning_samples(inst, cfg)
    best = -math.inf
    Q_best, r_best = 0, t
    r = t
    while True:
        Q, total = best_quantity(inst, t, r, state, samples, cfg.step, cfg.qmax)
        avg = total / (r - t + 1)
        if avg >= best:
            Q_best, r_best, best = Q, r, avg
        r += 1
        if not (avg >= best and r <= inst.T):
            break
    return CyclePlan(t, r_best, Q_best, best)


def planning_samples(inst: Instance, cfg: HeuristicConfig) -> ScenarioSet:
    return generate_scenarios(inst, cfg.samples, cfg.seed)


@dataclass
class HeuristicRun:
    report: EvalReport
    orders: np.ndarray  # (n, T)
    replans: np.ndarray  # (n, T) bool, True where a plan was made
    plans: int


def run(inst: Instance, cfg: HeuristicConfig | None, scenarios: ScenarioSet | np.ndarray) -> HeuristicRun:
    """Roll the heuristic forward along every evaluation path.

    In ``cycle`` mode the order chosen at t is committed through r* and the
    next plan is made at r*+1; in ``period`` mode a plan is made every period.
    Plans are cached per (period, inventory, capital) so paths sharing a state
    share the decision.
    """
    cfg = cfg or HeuristicConfig()
    paths = scenarios.paths if isinstance(scenarios, ScenarioSet) else np.asarray(scenarios)
    seed = scenarios.seed if isinstance(scenarios, ScenarioSet) else None
    samples = planning_samples(inst, cfg)
    dyn = Dynamics(inst, exact=True)
    n = len(paths)
    I = np.full(n, inst.I0, dtype=np.int64)
    B = np.full(n, to_ticks(inst.B0), dtype=np.int64)
    next_plan = np.ones(n, dtype=np.int64)
    orders = np.zeros((n, inst.T), dtype=np.int64)
    replans = np.zeros((n, inst.T), dtype=bool)
    cache: dict[tuple[int, int, int], CyclePlan] = {}
    for t in range(1, inst.T + 1):
        due = np.flatnonzero(next_plan == t) if cfg.replan == "cycle" else np.arange(n)
        replans[due, t - 1] = True
        if len(due):
            keys, inverse = np.unique(np.stack([I[due], B[due]], axis=1), axis=0, return_inverse=True)
            Qs = np.empty(len(keys), dtype=np.int64)
            ends = np.empty(len(keys), dtype=np.int64)
            for j, (i_val, b_val) in enumerate(keys):
                key = (t, int(i_val), int(b_val))
                if key not in cache:
                    cache[key] = plan(inst, t, State(int(i_val), b_val / SCALE), cfg, samples)
                Qs[j], ends[j] = cache[key].Q, cache[key].r
            inverse = inverse.reshape(-1)
            orders[due, t - 1] = Qs[inverse]
            next_plan[due] = ends[inverse] + 1 if cfg.replan == "cycle" else t + 1
        I, B = dyn.step(I, B, orders[:, t - 1], paths[:, t - 1])
    inc = (dyn.final(B) - to_ticks(inst.B0)) / SCALE
    return HeuristicRun(EvalReport.from_increments(inc, seed), orders, replans, len(cache))
