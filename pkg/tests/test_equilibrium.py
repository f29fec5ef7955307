import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolgame.equilibrium import (EQUILIBRIUM, NO_EQUILIBRIUM, CutPool, EmptyCutPool, EngineOptions, InfeasiblePoint,
                                  build_rmp, jacobi, min_disequilibrium, random_prices, solve_subproblem, verify,
                                  warmstart_nc, warmstart_pt, welfare_heuristic)
from poolgame.equilibrium.core import layouts, payoff, rgap
from poolgame.globalsolve import solve_global
from poolgame.pooling import build_feasible_set, zero_point


@pytest.fixture(scope="module")
def pc_cont_run():
    from poolgame.pooling import catalog
    game = catalog("haverly-2p-pc-cont")
    pool = CutPool.seeded(game)
    rep = min_disequilibrium(game, EngineOptions(), pool)
    return game, pool, rep


def test_min_diseq_finds_the_continuous_price_taker_equilibrium(pc_cont_run):
    game, _, rep = pc_cont_run
    assert rep.verdict == EQUILIBRIUM
    assert rep.prices == pytest.approx({"H": 10.0, "L": 15.0}, abs=1e-2)
    assert rep.profits == pytest.approx([400.0, 325.0], abs=1e-2)
    assert rep.eta_lower <= rep.eta_upper


def test_bounds_are_monotone_along_the_run(pc_cont_run):
    _, _, rep = pc_cont_run
    lows = [r.eta_lb for r in rep.log]
    highs = [r.eta_ub for r in rep.log]
    assert all(b >= a for a, b in zip(lows, lows[1:]))
    assert all(b <= a for a, b in zip(highs, highs[1:]))


def test_equilibrium_verdict_survives_independent_verification(pc_cont_run):
    game, _, rep = pc_cont_run
    ver = verify(game, rep.prices, rep.points)
    assert ver.verdict == EQUILIBRIUM
    assert max(ver.deltas) <= 1e-3


def test_stored_cuts_never_exceed_best_responses(pc_cont_run):
    """Every stored point is feasible and no better than a best response at sampled prices."""
    game, pool, _ = pc_cont_run
    rng = np.random.default_rng(3)
    lays = layouts(game)
    for j, pts in enumerate(pool.points):
        fs = build_feasible_set(game.players[j])
        for x in pts:
            assert fs.model.is_feasible(x, 1e-6)
        for _ in range(3):
            prices = {m.output_node: float(rng.uniform(0, m.alpha)) for m in game.markets}
            best = solve_subproblem(game, j, prices)
            for x in pts:
                assert best.bound >= payoff(game, j, lays[j], x, prices) - 1e-6


def test_master_optimum_is_a_lower_bound_on_candidates(pc_cont_run, game):
    """The relaxed master never exceeds the disequilibrium of a feasible candidate."""
    _, pool, _ = pc_cont_run
    sym = game("haverly-sym-pc2")
    sym_pool = CutPool.seeded(sym)
    for seed in range(2):
        ws = warmstart_pt(sym, seed)
        for j, x in enumerate(ws.points):
            sym_pool.add(j, x)
    rmp = build_rmp(sym, sym_pool)
    res = solve_global(rmp.model, EngineOptions().master_solve_options())
    cand = welfare_heuristic(sym)
    assert res.bound <= sum(cand.deltas) + 1e-6
    # the zero profile clears the market at the intercepts
    zeros = [zero_point(build_feasible_set(p)) for p in sym.players]
    ver = verify(sym, {m.output_node: m.alpha for m in sym.markets}, zeros)
    assert res.bound <= sum(ver.deltas) + 1e-6


def test_verify_rejects_points_outside_the_game(game):
    g = game("haverly-2p-pc-cont")
    zeros = [zero_point(build_feasible_set(p)) for p in g.players]
    with pytest.raises(InfeasiblePoint):
        verify(g, {"H": 5.0, "L": 5.0}, zeros)  # prices do not clear the market
    with pytest.raises(InfeasiblePoint):
        verify(g, {"H": 13.0, "L": 23.0}, [zeros[0][:-1], zeros[1]])
    bad = zeros[0].copy()
    bad[0] = 1.0  # input bought but not shipped
    with pytest.raises(InfeasiblePoint):
        verify(g, {"H": 13.0, "L": 23.0}, [bad, zeros[1]])


def test_verify_zero_delta_at_a_best_response(game):
    g = game("haverly-single")
    prices = {"H": 9.0, "L": 15.0}
    br = solve_subproblem(g, 0, prices)
    ver = verify(g, prices, [br.point], check_prices=False)
    assert ver.deltas[0] <= 1e-4
    assert ver.players[0].profit == pytest.approx(400.0, abs=1e-3)


def test_empty_pool_is_rejected(game):
    g = game("haverly-2p-pc-cont")
    with pytest.raises(EmptyCutPool):
        build_rmp(g, CutPool([[], []]))


def test_rgap_conventions():
    assert rgap(0.0, 0.0) == "0/0"
    assert rgap(1.0, 0.0) == math.inf
    assert rgap(1.0, 4.0) == 0.25


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_warmstart_prices_are_reproducible_and_in_range(seed):
    from poolgame.pooling import catalog
    g = catalog("haverly-2p-pc-cont")
    a = random_prices(g, seed)
    assert a == random_prices(g, seed)
    for m in g.markets:
        assert 0.05 * m.alpha <= a[m.output_node] <= 0.95 * m.alpha


def test_cournot_warmstart_is_deterministic(game):
    g = game("haverly-2p-nc-cont")
    a, b = warmstart_nc(g, 4), warmstart_nc(g, 4)
    assert a.prices == b.prices
    for x, y in zip(a.candidate, b.candidate):
        np.testing.assert_array_equal(x, y)
    assert not a.extension
    assert all(d >= 0 for d in a.deltas)


def test_jacobi_zero_rounds_returns_start(game):
    g = game("haverly-2p-nc-cont")
    x0 = [zero_point(build_feasible_set(p)) for p in g.players]
    r = jacobi(g, x0, max_iters=0)
    assert not r.converged and r.rounds == 0
    for a, b in zip(r.points, x0):
        np.testing.assert_array_equal(a, b)


def test_jacobi_converges_to_cournot_equilibrium_and_stays(game):
    g = game("haverly-2p-nc-cont")
    r = jacobi(g)
    assert r.converged
    again = jacobi(g, r.points)
    assert again.converged and again.rounds == 1
    ver = verify(g, None, r.points)
    assert ver.verdict == EQUILIBRIUM


def test_symmetric_instance_is_certified_without_equilibrium(game):
    rep = min_disequilibrium(game("haverly-sym-pc2"), EngineOptions(seeds=(0,)))
    assert rep.verdict == NO_EQUILIBRIUM
    assert rep.eta_lower > 1e-3
    assert rep.eta_lower <= rep.eta_upper + 1e-9
    lows = [r.eta_lb for r in rep.log]
    assert all(b >= a for a, b in zip(lows, lows[1:]))


def test_three_symmetric_players_minimum_matches_the_price_grid(game):
    """Engine optimum against two independent routes: fixed-price evaluation and a local mesh."""
    from poolgame.equilibrium import mesh_grid
    from poolgame.equilibrium.mesh import cell_eta

    g = game("haverly-sym-pc3")
    rep = min_disequilibrium(g, EngineOptions())
    assert rep.verdict == NO_EQUILIBRIUM
    assert rep.eta_lower == pytest.approx(rep.eta_upper, abs=1e-3)
    assert rep.eta_upper == pytest.approx(163.889, abs=1e-2)
    eta, _ = cell_eta(g, rep.prices, EngineOptions())
    assert eta == pytest.approx(rep.eta_upper, abs=1e-3)
    res = mesh_grid(g, {"H": (9.4, 9.7), "L": (13.7, 13.9)}, step=0.1)
    assert np.all(res.eta >= rep.eta_lower - 1e-3)
    assert res.argmin()[1] == pytest.approx(164.0, abs=1e-2)


def test_five_symmetric_players_reach_equilibrium(game):
    # with B-pool producers breaking even at L = 13 and A-pool producers at H = 8,
    # demand (250, 250) needs two L plants and three H plants
    rep = min_disequilibrium(game("haverly-sym-pc5"), EngineOptions())
    assert rep.verdict == EQUILIBRIUM
    assert rep.prices == pytest.approx({"H": 8.0, "L": 13.0}, abs=1e-2)
