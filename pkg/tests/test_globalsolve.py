import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolgame.globalsolve import (GAP_LIMIT, OPTIMAL, Infeasible, SolveOptions, UnboundedBilinearVariable,
                                  UnboundedBox, _Compiled, build_relaxation, mccormick_rows, solve_global)
from poolgame.qcqp import BINARY, QcqpModel


# ---------------------------------------------------------------------------
# McCormick envelope


def test_mccormick_rows_hold_on_samples():
    rng = np.random.default_rng(0)
    for _ in range(20):
        xl, yl = rng.uniform(-5, 5, 2)
        xu, yu = xl + rng.uniform(0, 5), yl + rng.uniform(0, 5)
        x = rng.uniform(xl, xu, 10_000)
        y = rng.uniform(yl, yu, 10_000)
        for cx, cy, cw, rhs in mccormick_rows(xl, xu, yl, yu):
            assert np.all(cx * x + cy * y + cw * (x * y) <= rhs + 1e-9 * (1 + abs(rhs)))


def test_mccormick_is_tight_at_corners():
    xl, xu, yl, yu = -1.0, 2.0, 0.5, 3.0
    rows = mccormick_rows(xl, xu, yl, yu)
    for x, y in itertools.product((xl, xu), (yl, yu)):
        # at a corner some under- and some over-estimator is active
        slack = [rhs - (cx * x + cy * y + cw * x * y) for cx, cy, cw, rhs in rows]
        assert min(slack[:2]) == pytest.approx(0.0, abs=1e-12)
        assert min(slack[2:]) == pytest.approx(0.0, abs=1e-12)


def random_bilinear_model(rng, n=3, n_rows=2, convex_obj=False):
    m = QcqpModel("rand")
    lo = rng.uniform(-2, 0, n)
    hi = lo + rng.uniform(0.5, 3, n)
    xs = [m.add_variable(lo[i], hi[i]) for i in range(n)]
    x0 = rng.uniform(lo, hi)
    for r in range(n_rows):
        body = m.x(xs[0], 0.0)
        for i in range(n):
            body += m.x(xs[i], float(rng.normal()))
        for a, b in itertools.combinations(range(n), 2):
            if rng.random() < 0.6:
                body += m.x(xs[a], float(rng.normal())) * m.x(xs[b])
        val = body.evaluate(x0)
        m.add_constraint(body, "<=", float(val + rng.uniform(0, 1)), f"r{r}")
    obj = m.x(xs[0], 0.0)
    for i in range(n):
        obj += m.x(xs[i], float(rng.normal()))
    if convex_obj:
        for i in range(n):
            obj += m.x(xs[i], float(rng.uniform(0.1, 2))) * m.x(xs[i])
    else:
        for a, b in itertools.combinations_with_replacement(range(n), 2):
            obj += m.x(xs[a], float(rng.normal())) * m.x(xs[b])
    m.set_objective(obj, "min")
    return m, x0


@pytest.mark.parametrize("convex_obj", [False, True])
def test_relaxation_rows_valid_for_lifted_points(convex_obj):
    """Every sampled box point, lifted with its exact products, satisfies the envelope rows."""
    rng = np.random.default_rng(1)
    for _ in range(10):
        model, _ = random_bilinear_model(rng, convex_obj=convex_obj)
        cm = _Compiled(model)
        lp = build_relaxation(model)
        X = rng.uniform(cm.lb, cm.ub, size=(10_000, cm.n))
        W = X[:, cm.pa] * X[:, cm.pb]
        cols = [X, W]
        if cm.qlam.size:
            cols.append(cm.qlam * (X @ cm.qdir.T) ** 2)
        Z = np.hstack(cols)
        if convex_obj:
            assert cm.qlam.size == cm.n  # diagonal squares stay separate
        envelope = slice(cm.m, lp.A.shape[0])  # McCormick rows and tangent cuts follow the model rows
        act = Z @ lp.A[envelope].T
        assert np.all(act <= lp.rhs[envelope] + 1e-8 * (1 + np.abs(lp.rhs[envelope])))


# ---------------------------------------------------------------------------
# solver versus a grid-search oracle


def _oracle(model):
    """Grid over the first two variables, exact minimization over the third.

    Every row and the objective are at most quadratic in the third variable
    once the first two are fixed, so the inner problem is an interval-
    constrained scalar quadratic. The outer grid is refined around the best
    cells until the spacing is negligible.
    """
    cm = _Compiled(model)
    lb, ub = cm.lb, cm.ub
    rows = []
    for con in model.constraints:
        rows.append((con.body.canonical(), con.rhs))
    obj = model.objective.canonical()

    def split(expr, X1, X2):
        """Coefficients (q, p, r) of expr as q*x3^2 + p*x3 + r."""
        L, Q = expr.linear.terms, expr.quad
        q = Q.get((2, 2), 0.0) * np.ones_like(X1)
        p = L.get(2, 0.0) + Q.get((0, 2), 0.0) * X1 + Q.get((1, 2), 0.0) * X2
        r = (expr.linear.constant + L.get(0, 0.0) * X1 + L.get(1, 0.0) * X2 + Q.get((0, 0), 0.0) * X1 ** 2
             + Q.get((1, 1), 0.0) * X2 ** 2 + Q.get((0, 1), 0.0) * X1 * X2)
        return q, p, r

    def value(X1, X2):
        lo = np.full(X1.shape, lb[2])
        hi = np.full(X1.shape, ub[2])
        ok = np.ones(X1.shape, bool)
        for body, rhs in rows:
            _, a, r = split(body, X1, X2)  # rows have no x3^2 term
            b = rhs - r
            pos, neg = a > 1e-14, a < -1e-14
            with np.errstate(divide="ignore", invalid="ignore"):
                hi = np.where(pos, np.minimum(hi, b / a), hi)
                lo = np.where(neg, np.maximum(lo, b / a), lo)
            ok &= ~(~pos & ~neg & (b < -1e-12))
        ok &= lo <= hi + 1e-12
        q, p, r = split(obj, X1, X2)
        cands = [lo, hi]
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = np.where(q > 1e-14, -p / (2 * q), lo)
        cands.append(np.clip(stat, lo, np.maximum(lo, hi)))
        vals = np.min([q * c * c + p * c + r for c in cands], axis=0)
        return np.where(ok, vals, np.inf)

    def grid(a0, a1, b0, b1, k):
        g1, g2 = np.meshgrid(np.linspace(a0, a1, k), np.linspace(b0, b1, k), indexing="ij")
        return g1, g2, value(g1, g2)

    g1, g2, v = grid(lb[0], ub[0], lb[1], ub[1], 301)
    best = float(v.min())
    order = np.argsort(v, axis=None)[:15]
    h1, h2 = (ub[0] - lb[0]) / 300, (ub[1] - lb[1]) / 300
    for idx in order:
        c1, c2 = g1.flat[idx], g2.flat[idx]
        s1, s2 = 2 * h1, 2 * h2
        for _ in range(8):
            a1, b1 = max(lb[0], c1 - s1), min(ub[0], c1 + s1)
            a2, b2 = max(lb[1], c2 - s2), min(ub[1], c2 + s2)
            z1, z2, zv = grid(a1, b1, a2, b2, 41)
            k = int(np.argmin(zv))
            c1, c2 = z1.flat[k], z2.flat[k]
            best = min(best, float(zv.flat[k]))
            s1, s2 = s1 / 8, s2 / 8
    return best + obj.linear.constant * 0.0


def test_global_solver_matches_grid_oracle_on_random_models():
    rng = np.random.default_rng(2024)
    checked = 0
    for trial in range(100):
        model, _ = random_bilinear_model(rng)
        res = solve_global(model, rel_gap=0.0, abs_gap=1e-6)
        ref = _oracle(model)
        assert res.status == OPTIMAL
        assert model.is_feasible(res.point, 1e-6)
        assert abs(res.objective - ref) <= 1e-3, (trial, res.objective, ref)
        checked += 1
    assert checked == 100


def test_convex_objective_uses_tangents_and_matches_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        model, _ = random_bilinear_model(rng, convex_obj=True)
        res = solve_global(model, rel_gap=0.0, abs_gap=1e-4)
        assert res.status == OPTIMAL
        assert res.bound <= res.objective
        assert abs(res.objective - _oracle(model)) <= 1e-3


def test_general_psd_objective_is_split_into_squares():
    m = QcqpModel()
    x = m.add_variable(-2, 2)
    y = m.add_variable(-2, 2)
    # (x - y)^2 + (x - y)  has minimum -1/4 along x - y = -1/2
    m.set_objective(m.x(x) * m.x(x) - m.x(x, 2.0) * m.x(y) + m.x(y) * m.x(y) + m.x(x) - m.x(y))
    cm = _Compiled(m)
    assert cm.qlam.size == 1
    res = solve_global(m, rel_gap=0.0, abs_gap=1e-9)
    assert res.objective == pytest.approx(-0.25, abs=1e-7)


# ---------------------------------------------------------------------------
# statuses and errors


def test_maximization_and_binaries_match_enumeration():
    m = QcqpModel()
    x = m.add_variable(0, 3)
    z = [m.add_variable(kind=BINARY) for _ in range(3)]
    m.add_constraint(m.x(x) - m.x(z[0], 3.0), "<=", 0.0)
    m.add_constraint(m.x(z[0]) + m.x(z[1]) + m.x(z[2]), "<=", 2.0)
    m.set_objective(m.x(x) * m.x(z[1]) * 2.0 + m.x(z[2], 1.5) - m.x(z[0], 0.5) - m.x(x, 0.2), "max")
    res = solve_global(m, rel_gap=0.0, abs_gap=1e-9)
    best = -math.inf
    for bits in itertools.product((0, 1), repeat=3):
        if sum(bits) > 2:
            continue
        for xv in np.linspace(0, 3 * bits[0], 301):
            best = max(best, 2 * xv * bits[1] + 1.5 * bits[2] - 0.5 * bits[0] - 0.2 * xv)
    assert res.objective == pytest.approx(best, abs=1e-6)


def test_infeasible_model_raises():
    m = QcqpModel()
    a = m.add_variable(0, 1)
    b = m.add_variable(0, 1)
    m.add_constraint(m.x(a) * m.x(b), ">=", 2.0)
    m.set_objective(m.x(a))
    with pytest.raises(Infeasible):
        solve_global(m)


def test_unbounded_product_variable_raises():
    m = QcqpModel()
    a = m.add_variable(-math.inf, math.inf)
    b = m.add_variable(-1, 1)
    m.set_objective(m.x(a) * m.x(b))
    with pytest.raises(UnboundedBilinearVariable):
        solve_global(m)
    assert issubclass(UnboundedBilinearVariable, UnboundedBox)


def test_unbounded_linear_relaxation_raises():
    m = QcqpModel()
    a = m.add_variable(0, math.inf)
    m.set_objective(m.x(a), "max")
    with pytest.raises(UnboundedBox):
        solve_global(m)


def test_node_limit_reports_gap_limit_with_valid_bound():
    rng = np.random.default_rng(7)
    model, _ = random_bilinear_model(rng, n=3, n_rows=2)
    exact = solve_global(model, rel_gap=0.0, abs_gap=1e-9)
    res = solve_global(model, SolveOptions(rel_gap=0.0, abs_gap=0.0, node_limit=1, heuristic_every=0, polish=False))
    assert res.status in (GAP_LIMIT, OPTIMAL)
    if res.status == GAP_LIMIT:
        assert res.hit_limit
    assert res.bound <= exact.objective + 1e-7
    if res.point is not None:
        assert res.objective >= exact.objective - 1e-7


def test_options_are_not_mutated_by_keyword_overrides():
    opts = SolveOptions()
    m = QcqpModel()
    a = m.add_variable(0, 1)
    m.set_objective(m.x(a))
    solve_global(m, opts, rel_gap=0.5)
    assert opts.rel_gap == 1e-4


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_bound_never_exceeds_incumbent(seed):
    model, _ = random_bilinear_model(np.random.default_rng(seed))
    res = solve_global(model, rel_gap=1e-3, abs_gap=1e-6)
    assert res.bound <= res.objective + 1e-9 * (1 + abs(res.objective))
    assert model.is_feasible(res.point, 1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 100_000))
def test_pure_binary_models_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    nb = int(rng.integers(2, 9))
    m = QcqpModel()
    zs = [m.add_variable(kind=BINARY) for _ in range(nb)]
    W = rng.integers(1, 6, size=(2, nb))
    cap = W.sum(axis=1) // 2
    for r in range(2):
        m.add_constraint(quicksum_of(m, zs, W[r]), "<=", float(cap[r]))
    lin = rng.normal(size=nb)
    obj = quicksum_of(m, zs, lin)
    pairs = [(a, b, float(rng.normal())) for a, b in itertools.combinations(range(nb), 2) if rng.random() < 0.4]
    for a, b, c in pairs:
        obj += m.x(zs[a], c) * m.x(zs[b])
    m.set_objective(obj, "max")
    res = solve_global(m, rel_gap=0.0, abs_gap=1e-9)
    best = -math.inf
    for bits in itertools.product((0, 1), repeat=nb):
        z = np.array(bits)
        if np.all(W @ z <= cap):
            best = max(best, lin @ z + sum(c * z[a] * z[b] for a, b, c in pairs))
    assert res.objective == pytest.approx(best, abs=1e-9)


def quicksum_of(m, zs, coefs):
    out = m.x(zs[0], 0.0)
    for z, c in zip(zs, coefs):
        out += m.x(z, float(c))
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 2), st.floats(0.05, 0.95), st.booleans())
def test_shrinking_a_box_never_improves_the_relaxation(seed, var, frac, upper):
    """Child relaxations are at least as tight as their parent."""
    from poolgame.globalsolve import _Relaxation
    from poolgame.lp import solve_lp
    model, _ = random_bilinear_model(np.random.default_rng(seed))
    cm = _Compiled(model)
    rel = _Relaxation(cm)
    # tangent cuts are shared between nodes, as in the search
    cuts = rel.tangents(0.5 * (cm.lb + cm.ub)) if rel.k else []
    parent = solve_lp(rel.lp(cm.lb, cm.ub, cuts))
    lb, ub = cm.lb.copy(), cm.ub.copy()
    cut = lb[var] + frac * (ub[var] - lb[var])
    if upper:
        ub[var] = cut
    else:
        lb[var] = cut
    child = solve_lp(rel.lp(lb, ub, cuts))
    assert parent.status == "optimal"
    if child.status == "optimal":
        assert child.objective >= parent.objective - 1e-7 * (1 + abs(parent.objective))
