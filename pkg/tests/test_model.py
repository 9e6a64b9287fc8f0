import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lotflow.demand import DemandModel
from lotflow.model import (
    Decision,
    Dynamics,
    Instance,
    SchemaError,
    State,
    capital_transition,
    final_capital,
    from_ticks,
    inventory_transition,
    objective,
    period_breakdown,
    to_ticks,
)

import oracles
from conftest import two_point_instance


def test_inventory_transition():
    assert inventory_transition(0, 5, 2) == 3
    assert inventory_transition(-2, 0, 1) == -3


def test_first_period_without_order(two_point):
    # no stock, no order: backlog 2 costs 2 * pi, capital 5 stays positive
    s = capital_transition(State(0, 5), Decision(0), 2, two_point)
    assert s == State(-2, 1.0)


def test_order_clears_backlog(two_point):
    # backlog 2 sold at p=5 when 5 arrive; holding on the 2 left after demand 1
    s = capital_transition(State(-2, 1.0), Decision(5), 1, two_point)
    assert s.I == 2
    assert s.B == pytest.approx(1 + 5 * 3 - 5 - 10 - 2 * 1)


def test_interest_charged_on_overdraft(two_point):
    s = capital_transition(State(0, -10.0), Decision(0), 0, two_point)
    assert s.B == pytest.approx(-12.0)


def test_final_capital_and_objective(two_point):
    assert final_capital(-5.0, 0.2) == pytest.approx(-6.0)
    assert final_capital(3.0, 0.2) == 3.0
    assert objective(8.8, two_point) == pytest.approx(3.8)


def test_decision_flag():
    assert Decision(0).R is False
    assert Decision(3).R is True
    with pytest.raises(ValueError):
        Decision(-1)


def test_interest_rounds_half_to_even():
    inst = two_point_instance().replace(b=0.5)
    # 0.5 * 0.0001 = half a tick: rounds to even (0 ticks)
    s = capital_transition(State(0, -0.0001), Decision(0), 0, inst)
    assert to_ticks(s.B) == -1
    s = capital_transition(State(0, -0.0003), Decision(0), 0, inst)
    assert to_ticks(s.B) == -5  # interest 1.5 ticks -> 2


money = st.integers(-500_000, 500_000).map(from_ticks)


@settings(max_examples=300, deadline=None)
@given(
    I=st.integers(-20, 20),
    B=money,
    Q=st.integers(0, 30),
    D=st.integers(0, 30),
    prm=st.tuples(*[st.integers(0, 12)] * 5),
    b=st.sampled_from([0.0, 0.05, 0.1, 0.2, 0.35]),
)
def test_cash_conservation_and_sales_cap(I, B, Q, D, prm, b):
    p, a, v, h, pi = prm
    inst = Instance(T=1, B0=0, p=p, a=a, v=v, h=h, pi=pi, b=b, demand=[DemandModel.constant(D)])
    s = capital_transition(State(I, B), Decision(Q), D, inst)
    parts = period_breakdown(State(I, B), Q, D, inst)
    sales = parts["revenue"] / p if p else min(D + max(-I, 0), Q + max(I, 0))
    assert sales <= D + max(-I, 0) and sales <= Q + max(I, 0)
    flow = parts["revenue"] - parts["variable"] - parts["fixed"] - parts["holding"] - parts["penalty"] - parts["interest"]
    assert s.B - B == pytest.approx(flow, abs=1e-6)
    assert s.I == I + Q - D
    _, exact = oracles.period(I, oracles.frac(B), Q, D, p, a, v, h, pi, oracles.frac(b))
    assert abs(float(exact) - s.B) <= 0.5e-4 + 1e-9


@settings(max_examples=100, deadline=None)
@given(
    I=st.lists(st.integers(-10, 10), min_size=1, max_size=20),
    data=st.data(),
    b=st.sampled_from([0.0, 0.05, 0.2]),
)
def test_vectorized_dynamics_matches_scalar(I, data, b):
    n = len(I)
    B = data.draw(st.lists(money, min_size=n, max_size=n))
    Q = data.draw(st.lists(st.integers(0, 15), min_size=n, max_size=n))
    D = data.draw(st.lists(st.integers(0, 15), min_size=n, max_size=n))
    inst = two_point_instance().replace(b=b)
    dyn = Dynamics(inst)
    I2, B2 = dyn.step(np.array(I), dyn.money(B), np.array(Q), np.array(D))
    for k in range(n):
        s = capital_transition(State(I[k], B[k]), Decision(Q[k]), D[k], inst)
        assert (int(I2[k]), int(B2[k])) == (s.I, to_ticks(s.B))
    fl = Dynamics(inst, exact=False)
    I3, B3 = fl.step(np.array(I), fl.money(B), np.array(Q), np.array(D))
    assert np.array_equal(I3, I2)
    assert np.allclose(B3, dyn.to_currency(B2), atol=1e-4)


def test_instance_roundtrip(tmp_path, two_point):
    path = tmp_path / "inst.json"
    two_point.dump(path)
    assert Instance.load(path) == two_point


@pytest.mark.parametrize("key", ["pi", "demand", "T"])
def test_missing_key_names_field(key, two_point):
    doc = two_point.to_dict()
    del doc[key]
    with pytest.raises(SchemaError) as err:
        Instance.from_dict(doc)
    assert err.value.field == key


def test_unknown_key_rejected(two_point):
    doc = two_point.to_dict() | {"colour": 1}
    with pytest.raises(SchemaError) as err:
        Instance.from_dict(doc)
    assert err.value.field == "colour"


def test_schema_validation(two_point):
    with pytest.raises(SchemaError):
        two_point.replace(T=2)  # demand list length mismatch
    with pytest.raises(SchemaError):
        two_point.replace(h=-1)
    doc = two_point.to_dict()
    doc["p"] = "five"
    with pytest.raises(SchemaError):
        Instance.from_dict(doc)
    doc = json.loads(json.dumps(two_point.to_dict()))
    doc["demand"][0] = {"kind": "pmf", "values": [1, 2], "probs": [0.5, 0.6]}
    with pytest.raises(SchemaError):
        Instance.from_dict(doc)


def test_remaining_max_demand(two_point):
    assert two_point.remaining_max_demand(1) == 6
    assert two_point.remaining_max_demand(3) == 2
