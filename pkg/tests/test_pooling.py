import copy
import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolgame.equilibrium import EngineOptions, monolithic_nc_heuristic, welfare_heuristic
from poolgame.equilibrium.core import solve_subproblem
from poolgame.globalsolve import solve_global
from poolgame.pooling import (NASH_COURNOT, PRICE_TAKER, GameInstance, MalformedNetwork, Market, MissingBaseData,
                              MissingPrice, SemanticError, UnknownInstance, build_feasible_set,
                              build_monolithic_nc_model, build_welfare_model, catalog, haverly_player,
                              nash_cournot_payoff, price_taker_objective, price_taker_payoff, recover_prices,
                              zero_point)


def haverly_optimum(fs):
    """Buy 100 B and 100 C, blend to 200 low-sulfur units."""
    lay = fs.layout
    x = zero_point(fs)
    x[lay.fin["B"]] = 100
    x[lay.fin["C"]] = 100
    x[lay.fout["L"]] = 200
    x[lay.arc[("B", "P")]] = 100
    x[lay.arc[("P", "L")]] = 100
    x[lay.arc[("C", "L")]] = 100
    x[lay.conc[("P", "S")]] = 0.01
    return x


def test_haverly_feasible_set_shape():
    fs = build_feasible_set(haverly_player("p", {"A": 6, "B": 16, "C": 10}))
    # 3 inputs, 2 outputs, 6 arcs, 1 pool concentration
    assert fs.layout.size == 12
    assert len(fs.model.constraints) == 11
    bilinear = [c.label for c in fs.model.constraints if not c.body.is_linear()]
    assert bilinear == ["p.blend[P,S]", "p.spec_max[H,S]", "p.spec_min[H,S]", "p.spec_max[L,S]",
                        "p.spec_min[L,S]"]
    mip = build_feasible_set(haverly_player("p", {"A": 6, "B": 16, "C": 10}, fixed_b=200.0))
    assert list(mip.layout.u) == ["B"]
    assert mip.layout.size == 13 and len(mip.model.constraints) == 13
    # the pool concentration box is tightened to the feeders' range
    v = fs.model.variables[fs.layout.conc[("P", "S")]]
    assert (v.lower, v.upper) == (0.01, 0.03)


def test_haverly_optimum_evaluates_to_400():
    game = catalog("haverly-single")
    fs = build_feasible_set(game.players[0])
    x = haverly_optimum(fs)
    obj, res = fs.model.evaluate(x)
    assert max(res) <= 1e-9
    prices = {m.output_node: m.alpha for m in game.markets}
    assert price_taker_payoff(game.players[0], fs.layout, x, prices) == pytest.approx(400.0)


def test_shutdown_point_is_feasible_with_zero_payoff():
    for name in ("haverly-single", "haverly-2p-pc-mip"):
        game = catalog(name)
        for p in game.players:
            fs = build_feasible_set(p)
            z = zero_point(fs)
            assert fs.model.is_feasible(z)
            assert price_taker_payoff(p, fs.layout, z, {"H": 9.0, "L": 15.0}) == 0.0


def test_spec_violation_residual_is_excess_sulfur():
    fs = build_feasible_set(haverly_player("p", {"A": 6, "B": 16, "C": 10}))
    lay = fs.layout
    x = zero_point(fs)
    # 100 units of crude A (3% sulfur) through the pool into the 1.5% product
    x[lay.fin["A"]] = x[lay.arc[("A", "P")]] = x[lay.arc[("P", "L")]] = x[lay.fout["L"]] = 100
    x[lay.conc[("P", "S")]] = 0.03
    _, res = fs.model.evaluate(x)
    labels = [c.label for c in fs.model.constraints]
    assert res[labels.index("p.spec_max[L,S]")] == pytest.approx(3.0 - 1.5)
    assert sum(res) == pytest.approx(1.5)


def test_global_solution_conserves_mass_and_sulfur():
    game = catalog("haverly-single")
    fs = build_feasible_set(game.players[0])
    fs.model.set_objective(price_taker_objective(fs, {"H": 9.0, "L": 15.0}), "max")
    res = solve_global(fs.model, rel_gap=0.0, abs_gap=1e-6)
    assert res.objective == pytest.approx(400.0, abs=1e-3)
    x, lay = res.point, fs.layout
    inflow = x[lay.arc[("A", "P")]] + x[lay.arc[("B", "P")]]
    outflow = x[lay.arc[("P", "H")]] + x[lay.arc[("P", "L")]]
    assert abs(inflow - outflow) <= 1e-6
    sulfur_in = 0.03 * x[lay.arc[("A", "P")]] + 0.01 * x[lay.arc[("B", "P")]]
    assert abs(sulfur_in - x[lay.conc[("P", "S")]] * outflow) <= 1e-6


def test_missing_price_raises():
    game = catalog("haverly-single")
    fs = build_feasible_set(game.players[0])
    with pytest.raises(MissingPrice):
        price_taker_payoff(game.players[0], fs.layout, zero_point(fs), {"H": 9.0})


def test_validation_errors():
    p = haverly_player("p", {"A": 6, "B": 16, "C": 10})
    bad = copy.deepcopy(p)
    bad.pools = ["P", "Q"]
    bad.arcs = bad.arcs + [("P", "Q"), ("Q", "H")]
    with pytest.raises(MalformedNetwork):
        bad.validate()
    with pytest.raises(MalformedNetwork):
        dataclasses.replace(p, arcs=p.arcs + [("A", "Z")])
    with pytest.raises(SemanticError):
        dataclasses.replace(p, cin={**p.cin, "A": {"S": 1.5}})
    with pytest.raises(SemanticError):
        Market("H", 13.0, -0.1)
    with pytest.raises(SemanticError):
        GameInstance([p], [Market("H", 13.0, 0.02)])
    with pytest.raises(SemanticError):
        GameInstance([], [Market("H", 13.0, 0.02)])


def test_catalog_names_and_errors():
    assert catalog("haverly-2p-nc-mip").players[1].cfixed == {"B": 200.0}
    assert catalog("haverly-2p-nc-mip").mode == NASH_COURNOT
    assert [(m.alpha, m.beta) for m in catalog("haverly-single").markets] == [(9.0, 0.0), (15.0, 0.0)]
    assert catalog("haverly-sym-pc(3)").n_players == 3
    assert catalog("haverly-sym-pc4").name == "haverly-sym-pc4"
    with pytest.raises(UnknownInstance):
        catalog("nope")
    with pytest.raises(MissingBaseData):
        catalog("adhya1-mod")


def test_recover_prices_from_inverse_demand():
    game = catalog("haverly-2p-pc-cont")
    sets = [build_feasible_set(p) for p in game.players]
    pts = [haverly_optimum(fs) for fs in sets]
    prices = recover_prices(game, pts, [fs.layout for fs in sets])
    assert prices == pytest.approx({"H": 13.0, "L": 23.0 - 0.04 * 400})


def test_symmetry_rows_only_for_identical_neighbours():
    labels = [c.label for c in build_welfare_model(catalog("haverly-sym-pc(3)")).model.constraints]
    assert "order[1,2]" in labels and "order[2,3]" in labels
    labels = [c.label for c in build_welfare_model(catalog("haverly-2p-pc-cont")).model.constraints]
    assert not any(lbl.startswith("order") for lbl in labels)


@pytest.mark.parametrize("name", ["haverly-2p-pc-cont", "haverly-sym-pc2", "haverly-2p-pc-mip"])
def test_projected_and_quantity_welfare_models_agree(name):
    game = catalog(name)
    a = solve_global(build_welfare_model(game).model, rel_gap=1e-6, abs_gap=1e-4)
    b = solve_global(build_welfare_model(game, projected=True).model, rel_gap=1e-6, abs_gap=1e-4)
    assert a.objective == pytest.approx(b.objective, abs=1e-3)


def test_cournot_gradient_identity_at_random_points():
    """The single-model Cournot objective has each player's marginal revenue as
    its partial derivative in that player's own output."""
    game = catalog("haverly-2p-nc-cont")
    jm = build_monolithic_nc_model(game)
    obj = jm.model.objective
    lb = np.array([v.lower for v in jm.model.variables])
    ub = np.array([v.upper for v in jm.model.variables])
    rng = np.random.default_rng(13)
    h = 1e-4
    for _ in range(20):
        x = rng.uniform(lb, ub)
        locs = jm.split(x)
        for j, fs in enumerate(jm.sets):
            for o, k in fs.layout.fout.items():
                m = game.market(o)
                rivals = sum(other.local(x)[other.layout.fout[o]] for i, other in enumerate(jm.sets) if i != j)
                g = fs.g(k)
                e = np.zeros_like(x)
                e[g] = h
                d_mono = (obj.evaluate(x + e) - obj.evaluate(x - e)) / (2 * h)
                xl = locs[j].copy()
                xp, xm = xl.copy(), xl.copy()
                xp[k] += h
                xm[k] -= h
                d_own = (nash_cournot_payoff(fs.player, fs.layout, xp, game, {o: rivals})
                         - nash_cournot_payoff(fs.player, fs.layout, xm, game, {o: rivals})) / (2 * h)
                exact = m.alpha - m.beta * (2 * xl[k] + rivals)
                assert d_mono == pytest.approx(exact, rel=1e-5, abs=1e-9)
                assert d_own == pytest.approx(exact, rel=1e-5, abs=1e-9)
                assert d_own == pytest.approx(d_mono, rel=1e-5, abs=1e-9)


def flat_game(mode):
    g = catalog("haverly-2p-pc-cont")
    g.markets = [Market("H", 9.0, 0.0), Market("L", 15.0, 0.0)]
    return g.with_mode(mode)


@settings(max_examples=8, deadline=None)
@given(st.floats(0, 100), st.floats(0, 200))
def test_zero_slope_makes_competition_type_irrelevant(rival_h, rival_l):
    pt, nc = flat_game(PRICE_TAKER), flat_game(NASH_COURNOT)
    a = solve_subproblem(pt, 0, {"H": 9.0, "L": 15.0})
    b = solve_subproblem(nc, 0, {"H": rival_h, "L": rival_l})
    assert a.value == pytest.approx(400.0, abs=1e-3)
    assert b.value == pytest.approx(a.value, abs=1e-3)


def test_zero_slope_heuristics_give_single_player_optimum():
    opts = EngineOptions()
    w = welfare_heuristic(flat_game(PRICE_TAKER), opts)
    m = monolithic_nc_heuristic(flat_game(NASH_COURNOT), opts)
    assert w.profits[0] == pytest.approx(400.0, abs=1e-3)
    assert m.profits[0] == pytest.approx(400.0, abs=1e-3)
