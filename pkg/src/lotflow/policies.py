"""Parametric control policies and Monte-Carlo policy evaluation.

Every parametric policy decides from the opening inventory alone. The batch
rule :func:`order_quantities` works on parameter arrays of shape (P, T) and
inventory arrays of shape (P, n) so the genetic algorithm can score a whole
population in one pass; :meth:`Policy.decide` is the plain per-state rule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, ClassVar, Sequence

import numpy as np

from lotflow.demand import ScenarioSet
from lotflow.model import (
    SCALE,
    Decision,
    Dynamics,
    Instance,
    SchemaError,
    State,
    capital_transition,
    final_capital,
    objective,
    to_ticks,
)

FAMILIES = ("RQ", "RS", "sS", "sQS")
_ALIASES = {"rq": "RQ", "rs": "RS", "ss": "sS", "sqs": "sQS"}
SQS_SEMANTICS = ("literal", "cap")


def family_name(name: str) -> str:
    key = name.lower().replace("(", "").replace(")", "").replace(",", "").replace("bar", "")
    if key in _ALIASES:
        return _ALIASES[key]
    raise ValueError(f"unknown policy family {name!r}; expected one of rq, rs, ss, sqs")


def order_quantities(family: str, params: dict[str, np.ndarray], t: int, I: np.ndarray,
                     sqs_semantics: str = "literal") -> np.ndarray:
    """Batch order rule. ``params`` arrays are (P, T); ``I`` is (P, n)."""
    k = t - 1
    if family == "RQ":
        return np.where(params["R"][:, k, None], params["Q"][:, k, None], 0) + 0 * I
    if family == "RS":
        return np.where(params["R"][:, k, None], np.maximum(0, params["S"][:, k, None] - I), 0)
    below = I < params["s"][:, k, None]
    up_to = np.maximum(0, params["S"][:, k, None] - I)
    if family == "sS":
        return np.where(below, up_to, 0)
    if family == "sQS":
        qbar = params["Qbar"][:, k, None]
        q = np.maximum(qbar, up_to) if sqs_semantics == "literal" else np.minimum(qbar, up_to)
        return np.where(below, q, 0)
    raise ValueError(f"unknown policy family {family!r}")


class Policy:
    """Common interface: ``decide`` a single state, ``decide_array`` many."""

    kind: ClassVar[str] = ""

    def order(self, t: int, I: int) -> int:
        raise NotImplementedError

    def decide(self, t: int, state: State) -> Decision:
        return Decision(self.order(t, state.I))

    def decide_array(self, t: int, I: np.ndarray, B_ticks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")


def _ints(xs: Sequence) -> tuple[int, ...]:
    out = tuple(int(x) for x in xs)
    if any(o != x for o, x in zip(out, xs)):
        raise ValueError("policy parameters must be integers")
    return out


@dataclass(frozen=True)
class _Parametric(Policy):
    def _batch(self) -> dict[str, np.ndarray]:
        return {
            k: np.asarray(getattr(self, k))[None, :]
            for k in ("R", "Q", "S", "s", "Qbar")
            if hasattr(self, k)
        }

    def decide_array(self, t: int, I: np.ndarray, B_ticks: np.ndarray | None = None) -> np.ndarray:
        I = np.asarray(I)
        return order_quantities(self.kind, self._batch(), t, I.reshape(1, -1), self._semantics()).reshape(I.shape)

    def _semantics(self) -> str:
        return "literal"

    @property
    def T(self) -> int:
        return len(self.S if hasattr(self, "S") else self.Q)


@dataclass(frozen=True)
class RQPolicy(_Parametric):
    R: tuple[bool, ...]
    Q: tuple[int, ...]
    kind: ClassVar[str] = "RQ"

    def __post_init__(self):
        object.__setattr__(self, "R", tuple(bool(r) for r in self.R))
        object.__setattr__(self, "Q", _ints(self.Q))
        if len(self.R) != len(self.Q) or min(self.Q, default=0) < 0:
            raise ValueError("RQ needs equal-length R and nonnegative Q")

    def order(self, t: int, I: int) -> int:
        return self.Q[t - 1] if self.R[t - 1] else 0

    def to_dict(self):
        return {"type": "RQ", "R": [int(r) for r in self.R], "Q": list(self.Q)}


@dataclass(frozen=True)
class RSPolicy(_Parametric):
    R: tuple[bool, ...]
    S: tuple[int, ...]
    kind: ClassVar[str] = "RS"

    def __post_init__(self):
        object.__setattr__(self, "R", tuple(bool(r) for r in self.R))
        object.__setattr__(self, "S", _ints(self.S))
        if len(self.R) != len(self.S):
            raise ValueError("RS needs equal-length R and S")

    def order(self, t: int, I: int) -> int:
        # S is ignored outside review periods
        return max(0, self.S[t - 1] - I) if self.R[t - 1] else 0

    def to_dict(self):
        return {"type": "RS", "R": [int(r) for r in self.R], "S": list(self.S)}


@dataclass(frozen=True)
class SSPolicy(_Parametric):
    s: tuple[int, ...]
    S: tuple[int, ...]
    kind: ClassVar[str] = "sS"

    def __post_init__(self):
        object.__setattr__(self, "s", _ints(self.s))
        object.__setattr__(self, "S", _ints(self.S))
        if len(self.s) != len(self.S):
            raise ValueError("sS needs equal-length s and S")

    def order(self, t: int, I: int) -> int:
        if I >= self.s[t - 1]:
            return 0
        return max(0, self.S[t - 1] - I)

    def to_dict(self):
        return {"type": "sS", "s": list(self.s), "S": list(self.S)}


@dataclass(frozen=True)
class SQSPolicy(_Parametric):
    s: tuple[int, ...]
    Qbar: tuple[int, ...]
    S: tuple[int, ...]
    semantics: str = "literal"
    kind: ClassVar[str] = "sQS"

    def __post_init__(self):
        for name in ("s", "Qbar", "S"):
            object.__setattr__(self, name, _ints(getattr(self, name)))
        if not len(self.s) == len(self.Qbar) == len(self.S):
            raise ValueError("sQS needs equal-length s, Qbar and S")
        if min(self.Qbar, default=0) < 0:
            raise ValueError("Qbar must be nonnegative")
        if self.semantics not in SQS_SEMANTICS:
            raise ValueError(f"sqs semantics must be one of {SQS_SEMANTICS}")

    def _semantics(self) -> str:
        return self.semantics

    def order(self, t: int, I: int) -> int:
        k = t - 1
        if I >= self.s[k]:
            return 0
        up_to = max(0, self.S[k] - I)
        if self.semantics == "cap":
            return min(self.Qbar[k], up_to)
        return max(self.Qbar[k], up_to)

    def to_dict(self):
        doc = {"type": "sQS", "s": list(self.s), "Qbar": list(self.Qbar), "S": list(self.S)}
        if self.semantics != "literal":
            doc["semantics"] = self.semantics
        return doc


@dataclass(frozen=True)
class SDPPolicy(Policy):
    """Optimal policy backed by a solved SDP (capital-aware)."""

    solution: Any
    kind: ClassVar[str] = "SDP"

    def order(self, t: int, I: int) -> int:
        raise TypeError("the SDP policy depends on capital; use decide(t, state)")

    def decide(self, t: int, state: State) -> Decision:
        return Decision(self.solution.action(t, state))

    def decide_array(self, t: int, I: np.ndarray, B_ticks: np.ndarray) -> np.ndarray:
        return self.solution.decide_array(t, np.asarray(I), np.asarray(B_ticks))

    def to_dict(self):
        return {"type": "SDP", "value": self.solution.value}


@dataclass(frozen=True)
class FixedOrders(Policy):
    """Replays a fixed order vector regardless of state."""

    Q: tuple[int, ...]
    kind: ClassVar[str] = "fixed"

    def order(self, t: int, I: int) -> int:
        return self.Q[t - 1]

    def decide_array(self, t: int, I: np.ndarray, B_ticks=None) -> np.ndarray:
        return np.full(np.shape(I), self.Q[t - 1], dtype=np.int64)

    def to_dict(self):
        return {"type": "fixed", "Q": list(self.Q)}


def policy_from_dict(doc: dict[str, Any]) -> Policy:
    try:
        kind = doc["type"]
        if kind == "RQ":
            return RQPolicy(R=doc["R"], Q=doc["Q"])
        if kind == "RS":
            return RSPolicy(R=doc["R"], S=doc["S"])
        if kind == "sS":
            return SSPolicy(s=doc["s"], S=doc["S"])
        if kind == "sQS":
            return SQSPolicy(s=doc["s"], Qbar=doc["Qbar"], S=doc["S"], semantics=doc.get("semantics", "literal"))
        if kind == "fixed":
            return FixedOrders(Q=tuple(doc["Q"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad policy document: {exc}", "policy") from exc
    raise SchemaError(f"unknown policy type {kind!r}", "type")


def load_policy(path: str | Path) -> Policy:
    return policy_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    mean: float
    stderr: float
    ci95: float
    n: int
    seed: int | None = None
    increments: np.ndarray | None = field(default=None, repr=False)

    CSV_HEADER: ClassVar[str] = "mean,stderr,ci95,n,seed"

    def csv_row(self) -> str:
        seed = "" if self.seed is None else str(self.seed)
        return f"{self.mean:.4f},{self.stderr:.4f},{self.ci95:.4f},{self.n},{seed}"

    @classmethod
    def from_increments(cls, inc: np.ndarray, seed: int | None = None, keep: bool = True) -> "EvalReport":
        inc = np.asarray(inc, dtype=np.float64)
        n = len(inc)
        mean = float(inc.mean())
        stderr = float(inc.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, stderr, 1.96 * stderr, n, seed, inc if keep else None)


def evaluate_path(inst: Instance, policy: Policy, path: Sequence[int]) -> float:
    """Final capital increment of one demand path, one state at a time."""
    if len(path) != inst.T:
        raise ValueError(f"path length {len(path)} != T={inst.T}")
    state = State(inst.I0, inst.B0)
    for t, D in enumerate(path, start=1):
        state = capital_transition(state, policy.decide(t, state), int(D), inst)
    return objective(final_capital(state.B, inst.b), inst)


def simulate(inst: Instance, decide, paths: np.ndarray, exact: bool = True,
             record: bool = False):
    """Run a vectorized decision rule over demand paths.

    ``decide(t, I, B)`` receives inventory and capital arrays (capital in ticks
    when ``exact``) and returns order quantities of the same shape. Paths may be
    (n, T) or carry leading batch axes, e.g. (P, n, T).
    Returns final capital increments in currency, plus the order matrix when
    ``record`` is set.
    """
    dyn = Dynamics(inst, exact=exact)
    paths = np.asarray(paths)
    shape = paths.shape[:-1]
    I = np.full(shape, inst.I0, dtype=np.int64)
    B = np.full(shape, dyn.money(inst.B0))
    orders = [] if record else None
    for t in range(1, inst.T + 1):
        Q = np.asarray(decide(t, I, B), dtype=np.int64)
        if record:
            orders.append(Q)
        I, B = dyn.step(I, B, Q, paths[..., t - 1])
    final = dyn.final(B)
    if exact:
        inc = (final - to_ticks(inst.B0)) / SCALE
    else:
        inc = final - inst.B0
    if record:
        return inc, np.stack(orders, axis=-1)
    return inc


def increments(inst: Instance, policy: Policy, paths: np.ndarray) -> np.ndarray:
    return simulate(inst, policy.decide_array, paths)


def evaluate(inst: Instance, policy: Policy, scenarios: ScenarioSet, keep: bool = False,
             chunk: int = 50_000) -> EvalReport:
    """Mean final capital increment of ``policy`` over a scenario set."""
    paths = scenarios.paths
    if paths.shape[1] != inst.T:
        raise ValueError("scenario horizon does not match the instance")
    parts = [increments(inst, policy, paths[s : s + chunk]) for s in range(0, len(paths), chunk)]
    inc = np.concatenate(parts)
    # increments are whole ticks, so an integer sum is exact and order-free
    ticks = np.rint(inc * SCALE).astype(np.int64)
    n = len(ticks)
    mean = float(ticks.sum()) / n / SCALE
    stderr = float(inc.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return EvalReport(mean, stderr, 1.96 * stderr, n, scenarios.seed, inc if keep else None)
