"""Problem definition and single-period cash/inventory dynamics.

Money is carried internally as integer ticks of 1e-4 so that every solver
sees bit-identical capital values and state keys hash cleanly. Interest on
overdraft is rounded half-to-even to the nearest tick.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from lotflow.demand import DemandModel

SCALE = 10_000  # ticks per currency unit

INSTANCE_KEYS = ("T", "B0", "I0", "p", "a", "v", "h", "pi", "b", "demand")


class SchemaError(ValueError):
    """Raised when an instance or policy document is malformed."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def to_ticks(x: float) -> int:
    return int(round(float(x) * SCALE))


def from_ticks(k) -> float:
    return k / SCALE


def round_money(x: float) -> float:
    return from_ticks(to_ticks(x))


def _as_fraction(x: float) -> Fraction:
    return Fraction(repr(float(x))).limit_denominator(10**9)


def _div_half_even(x: int, num: int, den: int) -> int:
    q, r = divmod(x * num, den)
    if 2 * r > den or (2 * r == den and q % 2 == 1):
        q += 1
    return q


def _div_half_even_array(x: np.ndarray, num: int, den: int) -> np.ndarray:
    q, r = np.divmod(x * num, den)
    up = (2 * r > den) | ((2 * r == den) & (q % 2 == 1))
    return q + up


@dataclass(frozen=True)
class Instance:
    T: int
    B0: float
    p: float
    a: float
    v: float
    h: float
    pi: float
    b: float
    demand: tuple[DemandModel, ...]
    I0: int = 0

    def __post_init__(self):
        object.__setattr__(self, "demand", tuple(self.demand))
        if int(self.T) != self.T or self.T < 1:
            raise SchemaError(f"T must be an integer >= 1, got {self.T!r}", "T")
        for name in ("p", "a", "v", "h", "pi"):
            if getattr(self, name) < 0:
                raise SchemaError(f"{name} must be nonnegative", name)
        if self.b < 0:
            raise SchemaError("b must be nonnegative", "b")
        if int(self.I0) != self.I0:
            raise SchemaError("I0 must be an integer", "I0")
        if len(self.demand) != self.T:
            raise SchemaError(
                f"demand has {len(self.demand)} entries, expected T={self.T}", "demand"
            )

    @cached_property
    def ticks(self) -> "Ticks":
        return Ticks.from_instance(self)

    @cached_property
    def supports(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        """Per-period (values, probs) of the explicit (truncated) demand pmfs."""
        return tuple(d.support() for d in self.demand)

    @cached_property
    def max_demands(self) -> tuple[int, ...]:
        return tuple(int(vals[-1]) for vals, _ in self.supports)

    def remaining_max_demand(self, t: int) -> int:
        """Sum of the largest possible demands over periods t..T (1-based)."""
        return sum(self.max_demands[t - 1 :])

    def replace(self, **changes) -> "Instance":
        kw = {k: getattr(self, k) for k in INSTANCE_KEYS}
        kw.update(changes)
        return Instance(**kw)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "T": self.T,
            "B0": self.B0,
            "I0": self.I0,
            "p": self.p,
            "a": self.a,
            "v": self.v,
            "h": self.h,
            "pi": self.pi,
            "b": self.b,
            "demand": [d.to_dict() for d in self.demand],
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Instance":
        if not isinstance(doc, dict):
            raise SchemaError("instance document must be a JSON object")
        unknown = sorted(set(doc) - set(INSTANCE_KEYS))
        if unknown:
            raise SchemaError(f"unknown key(s): {', '.join(unknown)}", unknown[0])
        for key in INSTANCE_KEYS:
            if key not in doc:
                raise SchemaError(f"missing key: {key}", key)
        for key in INSTANCE_KEYS[:-1]:
            if isinstance(doc[key], bool) or not isinstance(doc[key], (int, float)):
                raise SchemaError(f"{key} must be a number", key)
        if not isinstance(doc["demand"], list):
            raise SchemaError("demand must be a list", "demand")
        try:
            demand = [DemandModel.from_dict(d) for d in doc["demand"]]
        except (ValueError, TypeError, KeyError) as exc:
            raise SchemaError(f"bad demand descriptor: {exc}", "demand") from exc
        return cls(
            T=doc["T"],
            B0=float(doc["B0"]),
            I0=int(doc["I0"]),
            p=float(doc["p"]),
            a=float(doc["a"]),
            v=float(doc["v"]),
            h=float(doc["h"]),
            pi=float(doc["pi"]),
            b=float(doc["b"]),
            demand=demand,
        )

    @classmethod
    def load(cls, path: str | Path) -> "Instance":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class State:
    I: int
    B: float

    @property
    def I_plus(self) -> int:
        return max(self.I, 0)

    @property
    def I_minus(self) -> int:
        return max(-self.I, 0)


@dataclass(frozen=True)
class Decision:
    Q: int
    R: bool = field(init=False)

    def __post_init__(self):
        if self.Q < 0 or int(self.Q) != self.Q:
            raise ValueError(f"order quantity must be a nonnegative integer, got {self.Q!r}")
        object.__setattr__(self, "Q", int(self.Q))
        object.__setattr__(self, "R", self.Q > 0)


@dataclass(frozen=True)
class Ticks:
    """Cost parameters in integer ticks plus the interest rate as a fraction."""

    p: int
    a: int
    v: int
    h: int
    pi: int
    b_num: int
    b_den: int

    @classmethod
    def from_instance(cls, inst: Instance) -> "Ticks":
        frac = _as_fraction(inst.b)
        return cls(
            p=to_ticks(inst.p),
            a=to_ticks(inst.a),
            v=to_ticks(inst.v),
            h=to_ticks(inst.h),
            pi=to_ticks(inst.pi),
            b_num=frac.numerator,
            b_den=frac.denominator,
        )

    def interest(self, B: int) -> int:
        return _div_half_even(max(-B, 0), self.b_num, self.b_den)

    def interest_array(self, B: np.ndarray) -> np.ndarray:
        return _div_half_even_array(np.maximum(-B, 0), self.b_num, self.b_den)


def inventory_transition(I_prev: int, Q: int, D: int) -> int:
    return I_prev + Q - D


def _period_ticks(I: int, B: int, Q: int, D: int, tk: Ticks) -> tuple[int, int]:
    I_new = inventory_transition(I, Q, D)
    sales = min(D + max(-I, 0), Q + max(I, 0))
    charges = tk.v * Q + (tk.a if Q > 0 else 0) + tk.h * max(I_new, 0) + tk.pi * max(-I_new, 0)
    return I_new, B + tk.p * sales - charges - tk.interest(B)


def capital_transition(state: State, decision: Decision, D: int, inst: Instance) -> State:
    """Advance one period: sell, pay ordering/holding/penalty, pay overdraft interest."""
    if D < 0:
        raise ValueError("demand must be nonnegative")
    I_new, B_new = _period_ticks(state.I, to_ticks(state.B), decision.Q, int(D), inst.ticks)
    return State(I_new, from_ticks(B_new))


def final_capital(B_T: float, b: float) -> float:
    frac = _as_fraction(b)
    Bt = to_ticks(B_T)
    return from_ticks(Bt - _div_half_even(max(-Bt, 0), frac.numerator, frac.denominator))


def objective(final: float, inst: Instance) -> float:
    return round_money(final - inst.B0)


def period_breakdown(state: State, Q: int, D: int, inst: Instance) -> dict[str, float]:
    """Itemized cash flows of one period, in currency units."""
    I_new = inventory_transition(state.I, Q, D)
    tk = inst.ticks
    return {
        "revenue": inst.p * min(D + state.I_minus, Q + state.I_plus),
        "variable": inst.v * Q,
        "fixed": inst.a if Q > 0 else 0.0,
        "holding": inst.h * max(I_new, 0),
        "penalty": inst.pi * max(-I_new, 0),
        "interest": from_ticks(tk.interest(to_ticks(state.B))),
    }


class Dynamics:
    """Vectorized period transitions over numpy arrays.

    With ``exact=True`` capital arrays are int64 ticks and every value matches
    :func:`capital_transition` bit for bit. With ``exact=False`` capital is
    float64 currency and interest is left unrounded.
    """

    def __init__(self, inst: Instance, exact: bool = True):
        self.inst = inst
        self.exact = exact
        if exact:
            tk = inst.ticks
            self.p, self.a, self.v, self.h, self.pi = tk.p, tk.a, tk.v, tk.h, tk.pi
            self._tk = tk
        else:
            self.p, self.a, self.v, self.h, self.pi = inst.p, inst.a, inst.v, inst.h, inst.pi
            self._b = inst.b

    def money(self, x) -> np.ndarray:
        """Convert currency values to this engine's capital representation."""
        if self.exact:
            return np.rint(np.asarray(x, dtype=np.float64) * SCALE).astype(np.int64)
        return np.asarray(x, dtype=np.float64)

    def to_currency(self, B) -> np.ndarray:
        if self.exact:
            return np.asarray(B, dtype=np.float64) / SCALE
        return np.asarray(B, dtype=np.float64)

    def interest(self, B: np.ndarray) -> np.ndarray:
        if self.exact:
            return self._tk.interest_array(B)
        return self._b * np.maximum(-B, 0.0)

    def step(self, I: np.ndarray, B: np.ndarray, Q: np.ndarray, D: np.ndarray):
        I_new = I + Q - D
        sales = np.minimum(D + np.maximum(-I, 0), Q + np.maximum(I, 0))
        charges = (
            self.v * Q
            + self.a * (Q > 0)
            + self.h * np.maximum(I_new, 0)
            + self.pi * np.maximum(-I_new, 0)
        )
        return I_new, B + self.p * sales - charges - self.interest(B)

    def final(self, B: np.ndarray) -> np.ndarray:
        return B - self.interest(B)


def as_int_array(xs: Sequence[int]) -> np.ndarray:
    return np.asarray(xs, dtype=np.int64)
