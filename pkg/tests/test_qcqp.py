import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolgame.qcqp import (BINARY, BilinearTerm, BoundOrder, DimensionMismatch, DuplicateLabel, ModelError,
                           ModelFrozen, QcqpModel, QuadExpr, UnknownVariable, quicksum)


def small_model():
    m = QcqpModel("t")
    x = m.add_variable(0, 4, name="x")
    y = m.add_variable(-1, 2, name="y")
    z = m.add_variable(kind=BINARY, name="z")
    m.add_constraint(m.x(x) * m.x(y) + 2 * m.x(z), "<=", 3.0, "prod")
    m.add_constraint(m.x(x) + m.x(y) + 1.0, ">=", 0.5, "sum")
    m.set_objective(m.x(x, 2.0) - m.x(y) * m.x(y), "max")
    return m


def test_evaluate_objective_and_residuals():
    m = small_model()
    obj, res = m.evaluate([1.0, 2.0, 1.0])
    assert obj == pytest.approx(2.0 - 4.0)
    # 1*2 + 2 = 4 exceeds 3 by 1; the constant moved to the right: x + y >= -0.5
    assert res == pytest.approx([1.0, 0.0])
    assert m.constraint("sum").rhs == pytest.approx(-0.5)


def test_feasibility_and_bound_violations():
    m = small_model()
    assert m.is_feasible([1.0, 1.0, 0.0])
    assert not m.is_feasible([1.0, 1.0, 0.5])  # fractional binary
    assert m.bound_violations([5.0, 0.0, 0.0]) == {0: pytest.approx(1.0)}


def test_errors():
    m = QcqpModel()
    with pytest.raises(BoundOrder):
        m.add_variable(2, 1)
    a = m.add_variable(0, 1)
    with pytest.raises(UnknownVariable):
        m.add_constraint(m.x(a) + QuadExpr.var(7), "<=", 1)
    m.add_constraint(m.x(a), "<=", 1, "c")
    with pytest.raises(DuplicateLabel):
        m.add_constraint(m.x(a), "<=", 1, "c")
    with pytest.raises(ModelError):
        m.add_constraint(m.x(a), "<", 1)
    with pytest.raises(DimensionMismatch):
        m.evaluate([0.0, 1.0])
    with pytest.raises(ModelError):
        (m.x(a) * m.x(a)) * m.x(a)
    m.freeze()
    with pytest.raises(ModelFrozen):
        m.add_variable()


def test_bilinear_terms_are_ordered_pairs():
    with pytest.raises(ModelError):
        BilinearTerm(1.0, 5, 2)
    e = QuadExpr.from_terms([BilinearTerm(2.0, 1, 3)]) + QuadExpr.var(3) * QuadExpr.var(1)
    assert e.quad == {(1, 3): 3.0}
    assert e.bilinear_terms() == [BilinearTerm(3.0, 1, 3)]


def test_json_round_trip_keeps_infinite_bounds():
    m = small_model()
    m.add_variable(-math.inf, math.inf, name="free")
    m2 = QcqpModel.from_json(m.to_json())
    assert [(v.lower, v.upper, v.kind) for v in m2.variables] == [(v.lower, v.upper, v.kind) for v in m.variables]
    p = [1.0, -0.5, 1.0, 3.0]
    assert m2.evaluate(p) == m.evaluate(p)
    assert m2.sense == "max"


coef = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4), coef), max_size=8),
       st.lists(st.tuples(st.integers(0, 4), coef), max_size=6),
       st.lists(st.floats(-5, 5, allow_nan=False), min_size=5, max_size=5))
def test_expression_algebra_matches_numbers(quads, lins, point):
    """Building by operators and evaluating agrees with direct arithmetic."""
    e = quicksum([QuadExpr.var(i, c) for i, c in lins] +
                 [QuadExpr.var(a) * QuadExpr.var(b, c) for a, b, c in quads]) + 1.5
    want = 1.5 + sum(c * point[i] for i, c in lins) + sum(c * point[a] * point[b] for a, b, c in quads)
    assert e.evaluate(point) == pytest.approx(want, rel=1e-9, abs=1e-9)
    assert (e - e).canonical().evaluate(point) == pytest.approx(0.0, abs=1e-9)
    assert (2.0 * e).evaluate(point) == pytest.approx(2.0 * want, rel=1e-9, abs=1e-9)
