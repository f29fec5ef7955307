"""Single-model heuristics and the Jacobi best-response iteration."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..globalsolve import solve_global
from ..pooling import (NASH_COURNOT, PRICE_TAKER, GameInstance, build_feasible_set, build_monolithic_nc_model,
                       build_welfare_model, recover_prices, zero_point)
from .core import (EQUILIBRIUM, INCONCLUSIVE, EngineOptions, EquilibriumReport, _sub_task, layouts, parallel_map,
                   payoff, rival_totals, verify)


def _heuristic_report(game, method, jm, res, opts, t0, notes=()) -> EquilibriumReport:
    lays = [fs.layout for fs in jm.sets]
    points = jm.split(res.point)
    prices = recover_prices(game, points, lays)
    ver = verify(game, prices, points, opts)
    eta = float(sum(p.delta for p in ver.players))
    verdict = ver.verdict
    if res.hit_limit and verdict == EQUILIBRIUM:
        # the candidate still verifies; the model solve itself was not closed
        notes = list(notes) + [f"model solve stopped at {res.status}"]
    return EquilibriumReport(method, game.name, game.mode, verdict, prices, points, float("-inf"), eta,
                             ver.players, [], "S", 0,
                             {"model_status": res.status, "model_objective": res.objective,
                              "model_bound": res.bound, "nodes": res.nodes},
                             {"total_s": time.perf_counter() - t0}, list(notes))


def welfare_heuristic(game: GameInstance, options: EngineOptions | None = None,
                      projected: bool = False) -> EquilibriumReport:
    """Maximize welfare, read prices off the inverse demand and check each player."""
    if game.mode != PRICE_TAKER:
        raise ValueError("welfare heuristic applies to price-taker games")
    opts = options or EngineOptions()
    t0 = time.perf_counter()
    jm = build_welfare_model(game, projected)
    start = np.zeros(jm.model.n_vars)
    for fs in jm.sets:
        start[fs.indices] = zero_point(fs)
    so = opts.heuristic_solve_options()
    so.start_points = [start]
    res = solve_global(jm.model, so)
    return _heuristic_report(game, "welfare", jm, res, opts, t0)


def monolithic_nc_heuristic(game: GameInstance, options: EngineOptions | None = None,
                            impose_integrality: bool | None = None) -> EquilibriumReport:
    """Solve the single model whose stationarity system is the Cournot game's, then verify."""
    if game.mode != NASH_COURNOT:
        raise ValueError("monolithic heuristic applies to Cournot games")
    opts = options or EngineOptions()
    if impose_integrality is None:
        impose_integrality = game.has_fixed_costs
    t0 = time.perf_counter()
    jm = build_monolithic_nc_model(game, impose_integrality)
    start = np.zeros(jm.model.n_vars)
    for fs in jm.sets:
        start[fs.indices] = zero_point(fs)
    so = opts.heuristic_solve_options()
    so.start_points = [start]
    res = solve_global(jm.model, so)
    notes = [] if impose_integrality else ["integrality relaxed"]
    if not impose_integrality and game.has_fixed_costs:
        # binaries may be fractional; round purchase indicators up so the point is feasible
        for fs, x in zip(jm.sets, jm.split(res.point)):
            for i, k in fs.layout.u.items():
                res.point[fs.g(k)] = 1.0 if x[k] > 1e-9 else 0.0
    return _heuristic_report(game, "mono-nc", jm, res, opts, t0, notes)


@dataclass
class JacobiResult:
    points: list[np.ndarray]
    converged: bool
    rounds: int
    trajectory: list[list[float]] = field(default_factory=list)  # payoffs per round
    profiles: list[list[np.ndarray]] = field(default_factory=list)


def jacobi(game: GameInstance, x0: list[np.ndarray] | None = None, max_iters: int = 50,
           options: EngineOptions | None = None) -> JacobiResult:
    """Simultaneous best responses until no player gains more than ``eps``."""
    opts = options or EngineOptions()
    so = opts.sub_solve_options()
    lays = layouts(game)
    N = game.n_players
    if x0 is None:
        x0 = [zero_point(build_feasible_set(p)) for p in game.players]
    x = [np.asarray(v, dtype=float).copy() for v in x0]

    def contexts(pts):
        if game.mode == PRICE_TAKER:
            tot = {}
            for lay, v in zip(lays, pts):
                for o, k in lay.fout.items():
                    tot[o] = tot.get(o, 0.0) + float(v[k])
            prices = {m.output_node: m.alpha - m.beta * tot.get(m.output_node, 0.0) for m in game.markets}
            return [prices] * N
        return [rival_totals(game, lays, pts, j) for j in range(N)]

    ctx = contexts(x)
    traj = [[payoff(game, j, lays[j], x[j], ctx[j]) for j in range(N)]]
    profiles = [[v.copy() for v in x]]
    for k in range(max_iters):
        brs = parallel_map(_sub_task, [(game, j, ctx[j], so) for j in range(N)], opts.workers)
        current = traj[-1]
        if all(current[j] >= brs[j].value - opts.eps for j in range(N)):
            return JacobiResult(x, True, k + 1, traj, profiles)
        x = [b.point.copy() for b in brs]
        ctx = contexts(x)
        traj.append([payoff(game, j, lays[j], x[j], ctx[j]) for j in range(N)])
        profiles.append([v.copy() for v in x])
    return JacobiResult(x, False, max_iters, traj, profiles)
