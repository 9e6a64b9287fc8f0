"""Finite-horizon stochastic dynamic programming over (inventory, capital).

Within a period the order decision factors through a post-decision state
``(y, C)``: ``y = I + Q`` is the stock position after ordering and ``C`` is the
capital after overdraft interest, backlog revenue and ordering charges. Sales
split as ``I^- + min(D, y)``, so end-of-period capital is
``C + p*min(D, y) - h*(y - D)^+ - pi*(y - D)^-``, a function of ``(y, C, D)``
alone. Every (state, Q) pair landing on the same ``(y, C)`` shares one
expectation over demand.

Two backends share this factorization:

``exact``
    Forward reachability over states keyed by capital in 1e-4 ticks,
    followed by backward induction over the stored transition maps. Exact
    for the model's money precision, but the number of distinct capital
    values grows quickly once overdraft interest produces fractional cents.

``grid``
    Backward induction on a rectangular (inventory, capital) lattice whose
    capital step divides every cost parameter. Post-decision values are then
    exact lattice lookups; only the map from a pre-decision state with
    fractional capital (after interest) onto the post-decision lattice is
    linearly interpolated. Policies are evaluated on demand at any state.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lotflow.model import (
    SCALE,
    Decision,
    Dynamics,
    Instance,
    State,
    capital_transition,
    final_capital,
    from_ticks,
    objective,
    to_ticks,
)

logger = logging.getLogger(__name__)

DEFAULT_STATE_CAP = 50_000_000
# largest intermediate array the exact backend may build before giving up
DEFAULT_WORK_CAP = 20_000_000
TIE_TOL = 1e-9

_I_OFF = 1 << 19
_B_OFF = 1 << 41
_B_SHIFT = 42


class StateExplosionError(RuntimeError):
    def __init__(self, period: int, count: int, cap: int, what: str = "reachable states"):
        super().__init__(f"{count} {what} in period {period} exceed the cap of {cap}")
        self.period = period
        self.count = count
        self.cap = cap


class UnreachableStateError(KeyError):
    pass


def encode(I: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pack (inventory, capital ticks) into one sortable int64 key."""
    return ((I + _I_OFF) << _B_SHIFT) + (B + _B_OFF)


def decode(key: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return (key >> _B_SHIFT) - _I_OFF, (key & ((1 << _B_SHIFT) - 1)) - _B_OFF


# ---------------------------------------------------------------------------
# exact backend


@dataclass
class PeriodTable:
    """Optimal actions for the states reachable at the start of one period."""

    keys: np.ndarray  # sorted int64 state keys
    Q: np.ndarray
    value: np.ndarray  # increment-to-go per state

    def __len__(self) -> int:
        return len(self.keys)

    def lookup(self, I, B_ticks) -> np.ndarray:
        """Indices of the given states; -1 where a state is missing."""
        k = encode(np.asarray(I, dtype=np.int64), np.asarray(B_ticks, dtype=np.int64))
        pos = np.minimum(np.searchsorted(self.keys, k), len(self.keys) - 1)
        return np.where(self.keys[pos] == k, pos, -1)


@dataclass
class SdpSolution:
    value: float
    tables: list[PeriodTable]
    stats: list[int] = field(default_factory=list)
    method: str = "exact"

    @property
    def T(self) -> int:
        return len(self.tables)

    def action(self, t: int, state: State, fallback: bool = False) -> int:
        return action(self, t, state, fallback=fallback)

    def decide_array(self, t: int, I: np.ndarray, B_ticks: np.ndarray) -> np.ndarray:
        tab = self.tables[t - 1]
        idx = tab.lookup(I, B_ticks)
        if (idx < 0).any():
            j = int(np.flatnonzero(idx < 0)[0])
            raise UnreachableStateError(
                f"state (I={int(I[j])}, B={from_ticks(int(B_ticks[j]))}) not reachable in period {t}"
            )
        return tab.Q[idx]

    def to_dict(self) -> dict:
        periods = []
        for t, tab in enumerate(self.tables, start=1):
            I, B = decode(tab.keys)
            periods.append(
                {
                    "t": t,
                    "states": len(tab),
                    "actions": {f"{i}|{from_ticks(b):.4f}": int(q) for i, b, q in zip(I, B, tab.Q)},
                }
            )
        return {"method": "exact", "value": round(self.value, 10), "stats": self.stats, "periods": periods}

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def _sales_gain(p, h, pi, y: np.ndarray, d: np.ndarray) -> np.ndarray:
    left = y[:, None] - d[None, :]
    return p * np.minimum(d[None, :], y[:, None]) - h * np.maximum(left, 0) - pi * np.maximum(-left, 0)


def solve_exact(
    inst: Instance, state_cap: int = DEFAULT_STATE_CAP, work_cap: int = DEFAULT_WORK_CAP
) -> SdpSolution:
    dyn = Dynamics(inst, exact=True)
    T = inst.T

    state_keys = [encode(np.array([inst.I0], np.int64), np.array([to_ticks(inst.B0)], np.int64))]
    maps = []  # per period: (segment offsets, Q per pair, post index per pair, next index per (post, d))
    for t in range(1, T + 1):
        I, B = decode(state_keys[-1])
        qmax = np.maximum(0, inst.remaining_max_demand(t) - I)
        counts = qmax + 1
        n_pairs = int(counts.sum())
        if n_pairs > work_cap:
            raise StateExplosionError(t, n_pairs, work_cap, "state-action pairs")
        offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
        owner = np.repeat(np.arange(len(I)), counts)
        Q = np.arange(n_pairs) - offsets[owner]
        W = B - dyn.interest(B) + dyn.p * np.maximum(-I, 0)
        y = I[owner] + Q
        C = W[owner] - dyn.v * Q - dyn.a * (Q > 0)
        post_keys, post_inv = np.unique(encode(y, C), return_inverse=True)
        del owner, y, C

        py, pc = decode(post_keys)
        d, _ = inst.supports[t - 1]
        if len(post_keys) * len(d) > work_cap:
            raise StateExplosionError(t, len(post_keys) * len(d), work_cap, "transitions")
        nxt_I = py[:, None] - d[None, :]
        nxt_B = pc[:, None] + _sales_gain(dyn.p, dyn.h, dyn.pi, py, d)
        next_keys, next_inv = np.unique(encode(nxt_I, nxt_B).ravel(), return_inverse=True)
        del nxt_I, nxt_B
        if len(next_keys) > state_cap:
            raise StateExplosionError(t + 1, len(next_keys), state_cap)
        logger.debug(
            "period %d: %d states, %d actions, %d post-decision, %d successors",
            t, len(I), n_pairs, len(post_keys), len(next_keys),
        )
        maps.append((offsets, Q, post_inv, next_inv.reshape(len(post_keys), len(d))))
        state_keys.append(next_keys)

    # U_t: maximal expected final capital from a state, in currency
    _, B_end = decode(state_keys[T])
    U = dyn.to_currency(dyn.final(B_end))
    tables: list[PeriodTable] = [None] * T  # type: ignore[list-item]
    for t in range(T, 0, -1):
        offsets, Q, post_inv, next_inv = maps[t - 1]
        _, probs = inst.supports[t - 1]
        vals = (U[next_inv] @ probs)[post_inv]
        seg_max = np.maximum.reduceat(vals, offsets)
        owner_max = np.repeat(seg_max, np.diff(np.append(offsets, len(vals))))
        pos = np.where(vals >= owner_max - TIE_TOL, np.arange(len(vals)), len(vals))
        first = np.minimum.reduceat(pos, offsets)
        U = vals[first]
        _, B = decode(state_keys[t - 1])
        tables[t - 1] = PeriodTable(keys=state_keys[t - 1], Q=Q[first], value=U - dyn.to_currency(B))
        maps[t - 1] = None

    stats = [len(k) for k in state_keys]
    return SdpSolution(value=float(tables[0].value[0]), tables=tables, stats=stats)


# ---------------------------------------------------------------------------
# grid backend


def _lattice_step(inst: Instance) -> float:
    """Largest capital step (a divisor of 1 currency unit) dividing every cost and B0."""
    ticks = [to_ticks(x) for x in (inst.p, inst.a, inst.v, inst.h, inst.pi, inst.B0)]
    g = 0
    for k in ticks:
        g = math.gcd(g, abs(k))
    g = math.gcd(g, SCALE) if g else SCALE
    return g / SCALE


def _interp(table: np.ndarray, rows: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Linear interpolation along axis 1 at fractional column ``x``.

    Columns beyond the lattice extrapolate along the edge segment.
    """
    n = table.shape[1]
    k = np.clip(np.floor(x).astype(np.int64), 0, n - 2)
    frac = x - k
    lo = table[rows, k]
    hi = table[rows, k + 1]
    return lo + frac * (hi - lo)


@dataclass
class GridSolution:
    inst: Instance
    step: float
    I_lo: int
    B_lo: float
    W_lo: float
    J: list[np.ndarray]  # per period: post-decision value on the (y, C) lattice
    best_y: list[np.ndarray]  # per period: argmax_{y' >= y} of ordering up to y' at wealth w
    value: float = float("nan")
    stats: list[int] = field(default_factory=list)
    method: str = "grid"

    @property
    def T(self) -> int:
        return len(self.J)

    def _post_value(self, t: int, y: np.ndarray, C: np.ndarray) -> np.ndarray:
        J = self.J[t - 1]
        rows = np.clip(y - self.I_lo, 0, J.shape[0] - 1)
        return _interp(J, rows, (C - self.B_lo) / self.step)

    def decide_currency(self, t: int, I, B) -> tuple[np.ndarray, np.ndarray]:
        """Optimal order quantities and expected final capital for states (I, B).

        Candidates are "do not order" and the best order-up-to levels at the two
        wealth lattice points bracketing the state's wealth; on the lattice
        the bracket collapses and the choice is exact.
        """
        inst = self.inst
        I = np.atleast_1d(np.asarray(I, dtype=np.int64))
        B = np.atleast_1d(np.asarray(B, dtype=np.float64))
        Wp = B - inst.b * np.maximum(-B, 0.0) + inst.p * np.maximum(-I, 0) + inst.v * I
        stay = self._post_value(t, I, Wp - inst.v * I)

        arg = self.best_y[t - 1]
        x = (Wp - self.W_lo) / self.step
        j = np.clip(np.floor(x + 1e-9).astype(np.int64), 0, arg.shape[1] - 2)
        row = np.clip(I + 1 - self.I_lo, 0, arg.shape[0] - 1)
        can_order = I < inst.remaining_max_demand(t)
        y1 = arg[row, j]
        y2 = np.where(np.abs(x - j) < 1e-9, y1, arg[row, j + 1])
        v1 = self._post_value(t, y1, Wp - inst.v * y1 - inst.a)
        v2 = self._post_value(t, y2, Wp - inst.v * y2 - inst.a)
        v1 = np.where(can_order, v1, -np.inf)
        v2 = np.where(can_order, v2, -np.inf)

        lo_y = np.minimum(y1, y2)
        lo_v = np.where(y1 <= y2, v1, v2)
        hi_y = np.maximum(y1, y2)
        hi_v = np.where(y1 <= y2, v2, v1)
        order_y = np.where(lo_v >= hi_v - TIE_TOL, lo_y, hi_y)
        order_v = np.maximum(lo_v, hi_v)
        take = order_v > stay + TIE_TOL
        Q = np.where(take, order_y - I, 0)
        return Q, np.where(take, order_v, stay)

    def decide_array(self, t: int, I: np.ndarray, B_ticks: np.ndarray) -> np.ndarray:
        return self.decide_currency(t, I, np.asarray(B_ticks) / SCALE)[0]

    def action(self, t: int, state: State, fallback: bool = False) -> int:
        return int(self.decide_currency(t, [state.I], [state.B])[0][0])

    def to_dict(self) -> dict:
        return {
            "method": "grid",
            "value": round(self.value, 10),
            "step": self.step,
            "I_lo": self.I_lo,
            "B_lo": self.B_lo,
            "shape": list(self.J[0].shape),
        }

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def _capital_bounds(inst: Instance, I_lo: int, I_hi: int) -> tuple[float, float]:
    """Capital range containing every state reachable under any admissible actions."""
    dmax = inst.max_demands
    hi = max(inst.B0, 0.0) + inst.p * (sum(dmax) + max(-inst.I0, 0))
    lo = min(inst.B0, 0.0)
    backlog = max(-inst.I0, 0)
    for t in range(1, inst.T + 1):
        backlog += dmax[t - 1]
        order = max(0, inst.remaining_max_demand(t) - I_lo)
        worst = inst.v * order + inst.a + max(inst.h * I_hi, inst.pi * backlog)
        lo = lo - inst.b * max(-lo, 0.0) - worst
    return lo, hi


def _best_order_levels(J: np.ndarray, inst: Instance, t: int, I_lo: int, W_lo: float,
                       B_lo: float, n_W: int, step: float) -> np.ndarray:
    """For each (y, wealth lattice point): the smallest y' in [y, R_t] maximizing
    the value of ordering up to y'."""
    n_I, n_B = J.shape
    R = inst.remaining_max_demand(t)
    top = min(R - I_lo, n_I - 1)
    arg = np.full((n_I, n_W), top + I_lo, dtype=np.int32)
    if top < 0:
        return arg
    wcols = np.arange(n_W)
    best = np.full(n_W, -np.inf)
    best_y = np.full(n_W, top + I_lo, dtype=np.int32)
    base = (W_lo - B_lo) / step
    for r in range(top, -1, -1):
        y = r + I_lo
        x = wcols + base - (inst.v * y + inst.a) / step
        val = _interp(J, np.full(n_W, r), x)
        better = val >= best - TIE_TOL
        best = np.where(better, np.maximum(val, best), best)
        best_y = np.where(better, y, best_y)
        arg[r] = best_y
    return arg


def solve_grid(inst: Instance, step: float | None = None) -> GridSolution:
    step = step or _lattice_step(inst)
    for x in (inst.p, inst.a, inst.v, inst.h, inst.pi):
        if abs(x / step - round(x / step)) > 1e-9:
            raise ValueError(f"capital step {step} does not divide cost parameter {x}")

    T = inst.T
    I_lo = inst.I0 - sum(inst.max_demands)
    I_hi = max(inst.I0, inst.remaining_max_demand(1))
    b_lo, b_hi = _capital_bounds(inst, I_lo, I_hi)
    B_lo = math.floor(b_lo / step) * step
    n_B = int(math.ceil((b_hi - B_lo) / step)) + 2
    n_I = I_hi - I_lo + 1
    Igrid = np.arange(I_lo, I_hi + 1)
    Bgrid = B_lo + step * np.arange(n_B)
    # wealth after interest and inventory credit, B - b*B^- + p*I^- + v*I
    extra = [inst.p * max(-i, 0) + inst.v * i for i in (I_lo, I_hi)]
    W_lo = B_lo - math.ceil((inst.b * max(-B_lo, 0) - min(0.0, *extra)) / step + 1) * step
    n_W = int(math.ceil((Bgrid[-1] + max(0.0, *extra) - W_lo) / step)) + 2
    logger.debug("lattice %d x %d, capital in [%.1f, %.1f] step %g", n_I, n_B, B_lo, Bgrid[-1], step)

    sol = GridSolution(
        inst=inst, step=step, I_lo=I_lo, B_lo=B_lo, W_lo=W_lo,
        J=[None] * T, best_y=[None] * T,  # type: ignore[list-item]
    )
    U = np.broadcast_to(Bgrid - inst.b * np.maximum(-Bgrid, 0.0), (n_I, n_B)).copy()
    cols = np.arange(n_B, dtype=np.float64)
    for t in range(T, 0, -1):
        d, probs = inst.supports[t - 1]
        J = np.zeros((n_I, n_B))
        for dk, pk in zip(d, probs):
            rows = np.clip(Igrid - dk - I_lo, 0, n_I - 1)
            gain = _sales_gain(inst.p, inst.h, inst.pi, Igrid, np.array([dk]))[:, 0]
            shift = np.rint(gain / step)
            J += pk * _interp(U, rows[:, None], cols[None, :] + shift[:, None])
        sol.J[t - 1] = J
        sol.best_y[t - 1] = _best_order_levels(J, inst, t, I_lo, W_lo, B_lo, n_W, step)
        if t == 1:
            break
        U = np.empty((n_I, n_B))
        for r in range(n_I):
            U[r] = sol.decide_currency(t, np.full(n_B, Igrid[r]), Bgrid)[1]

    _, U0 = sol.decide_currency(1, [inst.I0], [inst.B0])
    sol.value = float(U0[0] - inst.B0)
    sol.stats = [n_I, n_B]
    return sol


# ---------------------------------------------------------------------------


def solve(inst: Instance, method: str = "auto", state_cap: int = DEFAULT_STATE_CAP, **kw):
    """Maximize expected final capital increment.

    Actions range over ``0..max(0, sum of remaining max demands - I)``; ties
    go to the smallest order quantity. ``method='auto'`` runs the exact
    backend and falls back to the lattice when the exact state space would
    exceed the working-memory cap.
    """
    if method == "exact":
        return solve_exact(inst, state_cap=state_cap, work_cap=kw.get("work_cap", DEFAULT_WORK_CAP))
    if method == "grid":
        return solve_grid(inst, step=kw.get("step"))
    if method != "auto":
        raise ValueError(f"unknown SDP method {method!r}")
    try:
        return solve_exact(inst, state_cap=state_cap, work_cap=kw.get("work_cap", DEFAULT_WORK_CAP))
    except StateExplosionError as exc:
        logger.info("exact SDP too large (%s); using the capital lattice", exc)
        return solve_grid(inst, step=kw.get("step"))


def action(sol, t: int, state: State, fallback: bool = False) -> int:
    """Stored optimal order quantity at period ``t`` (1-based) for ``state``."""
    if isinstance(sol, GridSolution):
        return sol.action(t, state)
    tab = sol.tables[t - 1]
    Bt = to_ticks(state.B)
    idx = int(tab.lookup([state.I], [Bt])[0])
    if idx >= 0:
        return int(tab.Q[idx])
    if not fallback:
        raise UnreachableStateError(f"state (I={state.I}, B={state.B}) not reachable in period {t}")
    I, B = decode(tab.keys)
    same = np.flatnonzero(I == state.I)
    if len(same) == 0:
        raise UnreachableStateError(f"no reachable state with I={state.I} in period {t}")
    return int(tab.Q[same[np.argmin(np.abs(B[same] - Bt))]])


def replay(sol, inst: Instance, path) -> tuple[list[int], float]:
    """Follow the optimal policy along a realized demand path."""
    if len(path) != inst.T:
        raise ValueError(f"path length {len(path)} != T={inst.T}")
    state = State(inst.I0, inst.B0)
    orders = []
    for t, D in enumerate(path, start=1):
        q = action(sol, t, state)
        orders.append(q)
        state = capital_transition(state, Decision(q), int(D), inst)
    return orders, objective(final_capital(state.B, inst.b), inst)
