"""Cutting-plane minimization of total disequilibrium, plus its warmstarts."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..globalsolve import SolveOptions, solve_global
from ..pooling import NASH_COURNOT, PRICE_TAKER, GameInstance
from .core import (EQUILIBRIUM, INCONCLUSIVE, NO_EQUILIBRIUM, EngineOptions, EquilibriumReport, IterationRow,
                   PlayerReport, SubproblemResult, _sub_task, best_responses, contexts_for, layouts, market_totals,
                   parallel_map, payoff, rgap, rival_totals, solve_subproblem)
from .master import CutPool, LinkingSet, build_rmp


def price_generator(seed: int) -> np.random.Generator:
    """Counter-based stream (Philox) so draws do not depend on worker scheduling."""
    return np.random.Generator(np.random.Philox(int(seed)))


def random_prices(game: GameInstance, seed: int) -> dict[str, float]:
    """alpha_n * U(0.05, 0.95), drawn in market order (sorted node ids)."""
    rng = price_generator(seed)
    return {m.output_node: float(m.alpha * rng.uniform(0.05, 0.95)) for m in game.markets}


@dataclass
class WarmstartResult:
    seed: int
    prices: dict[str, float]
    points: list[np.ndarray]                   # points to add to the cut pool, per player
    candidate: list[np.ndarray] | None = None  # Cournot only
    bounds: list[float] | None = None          # dual bounds matching the candidate
    deltas: list[float] | None = None
    hit_limit: bool = False
    extension: bool = False
    time_s: float = 0.0


def warmstart_pt(game: GameInstance, seed: int, options: EngineOptions | None = None) -> WarmstartResult:
    """Best responses of every player at one random price vector."""
    if game.mode != PRICE_TAKER:
        raise ValueError("warmstart_pt needs a price-taker game")
    opts = options or EngineOptions()
    t0 = time.perf_counter()
    prices = random_prices(game, seed)
    brs = best_responses(game, [prices] * game.n_players, opts)
    return WarmstartResult(seed, prices, [b.point for b in brs], hit_limit=any(b.hit_limit for b in brs),
                           time_s=time.perf_counter() - t0)


def warmstart_nc(game: GameInstance, seed: int, options: EngineOptions | None = None) -> WarmstartResult:
    """Gauss-Seidel warmstart for Cournot games.

    Two players: fix player 2's output at the demand of the random prices, then
    solve 1, 2, 1, 2 and return player 1's second and player 2's first
    solution, whose bounds come from the last two solves. With more players
    (an extension of the two-player recipe) every rival starts with an equal
    share of that demand, one sweep produces the candidate, and a second pass
    of best responses against the candidate supplies the bounds.
    """
    if game.mode != NASH_COURNOT:
        raise ValueError("warmstart_nc needs a Cournot game")
    opts = options or EngineOptions()
    so = opts.sub_solve_options()
    t0 = time.perf_counter()
    prices = random_prices(game, seed)
    lays = layouts(game)
    N = game.n_players
    demand = {m.output_node: ((m.alpha - prices[m.output_node]) / m.beta if m.beta > 0 else 0.0)
              for m in game.markets}
    share = 1.0 / max(N - 1, 1)
    current: list[np.ndarray | None] = [None] * N

    def totals_for(j):
        out = {}
        for i in range(N):
            if i == j:
                continue
            for o in game.players[i].outputs:
                if current[i] is None:
                    out[o] = out.get(o, 0.0) + share * demand[o]
                else:
                    out[o] = out.get(o, 0.0) + float(current[i][lays[i].fout[o]])
        return out

    hit = False
    if N == 2:
        r = solve_subproblem(game, 0, totals_for(0), so)
        current[0] = r.point
        r = solve_subproblem(game, 1, totals_for(1), so)
        current[1] = x2_first = r.point
        r1 = solve_subproblem(game, 0, totals_for(0), so)
        current[0] = x1_second = r1.point
        r2 = solve_subproblem(game, 1, totals_for(1), so)
        cand = [x1_second, x2_first]
        bounds = [r1.bound, r2.bound]
        hit = any(r.hit_limit for r in (r1, r2))
        extension = False
    else:
        for j in range(N):
            r = solve_subproblem(game, j, totals_for(j), so)
            current[j] = r.point
            hit |= r.hit_limit
        cand = [c.copy() for c in current]
        ctx = [rival_totals(game, lays, cand, j) for j in range(N)]
        brs = parallel_map(_sub_task, [(game, j, ctx[j], so) for j in range(N)], opts.workers)
        bounds = [b.bound for b in brs]
        hit |= any(b.hit_limit for b in brs)
        extension = True
    deltas = []
    for j in range(N):
        pj = payoff(game, j, lays[j], cand[j], rival_totals(game, lays, cand, j))
        deltas.append(max(bounds[j] - pj, 0.0))
    return WarmstartResult(seed, prices, [c.copy() for c in cand], cand, bounds, deltas, hit, extension,
                           time.perf_counter() - t0)


def _report(game, method, verdict, prices, points, eta_l, eta_u, lays, ctx, bounds, log, pbf, ibf, ws_cuts,
            stats, timing, notes) -> EquilibriumReport:
    players = []
    for j, (lay, x) in enumerate(zip(lays, points)):
        pj = payoff(game, j, lay, x, ctx[j])
        ub = max(bounds[j], pj)
        d = ub - pj
        players.append(PlayerReport(game.players[j].name, pj, ub, d, rgap(d, ub), ws_cuts[j]))
    return EquilibriumReport(method, game.name, game.mode, verdict, prices, [np.asarray(x) for x in points],
                             eta_l, eta_u, players, log, pbf, ibf, stats, timing, notes)


def min_disequilibrium(game: GameInstance, options: EngineOptions | None = None,
                       pool: CutPool | None = None, on_iteration=None) -> EquilibriumReport:
    """Alternate between the relaxed master problem and best responses until
    the bounds on minimum total disequilibrium meet."""
    opts = options or EngineOptions()
    eps = opts.eps
    t_start = time.perf_counter()
    consumer = opts.consumer_as_player and game.mode == PRICE_TAKER
    linking = LinkingSet(game.mode, stationarity=not consumer)
    pool = pool or CutPool.seeded(game, consumer)
    lays = layouts(game)
    N = game.n_players
    notes = []
    ws_cuts = [0] * N
    eta_l, eta_u = -math.inf, math.inf
    best = None  # (prices, points, ctx, bounds, iteration, phase)
    hit_limit = False
    ws_time = 0.0

    # warmstart phase
    for seed in opts.seeds:
        if game.mode == PRICE_TAKER:
            ws = warmstart_pt(game, seed, opts)
        else:
            ws = warmstart_nc(game, seed, opts)
            if ws.extension and "warmstart: N>2 generalization (extension)" not in notes:
                notes.append("warmstart: N>2 generalization (extension)")
        ws_time += ws.time_s
        hit_limit |= ws.hit_limit
        for j, x in enumerate(ws.points):
            if pool.add(j, x):
                ws_cuts[j] += 1
        if ws.candidate is not None:
            total = float(sum(ws.deltas))
            if total < eta_u:
                eta_u = total
                cand = ws.candidate
                ctx = contexts_for(game, lays, cand, None)
                prices = {m.output_node: m.alpha - m.beta * market_totals(lays, cand).get(m.output_node, 0.0)
                          for m in game.markets}
                best = (prices, cand, ctx, ws.bounds, 0, "WS")
            if max(ws.deltas) <= eps and not ws.hit_limit:
                break

    log: list[IterationRow] = []
    master_time = sub_time = 0.0
    it = 0
    converged = best is not None and eta_u <= eps and max(best[3][j] - payoff(game, j, lays[j], best[1][j], best[2][j])
                                                          for j in range(N)) <= eps
    rmp_nodes = 0
    while not converged and it < opts.max_iters:
        it += 1
        t0 = time.perf_counter()
        rmp = build_rmp(game, pool, linking)
        res = solve_global(rmp.model, opts.master_solve_options())
        t_master = time.perf_counter() - t0
        master_time += t_master
        rmp_nodes += res.nodes
        if res.hit_limit:
            hit_limit = True
        eta_l = max(eta_l, res.bound)
        if res.point is None:
            log.append(IterationRow(it, eta_l, eta_u, t_master, 0.0, pool.size()))
            break
        x = res.point
        pts = rmp.sets and [fs.local(x) for fs in rmp.sets]
        w_hat = [float(x[v]) for v in rmp.w]
        prices = rmp.prices(x, game)
        ctx = contexts_for(game, lays, pts, prices)
        t1 = time.perf_counter()
        brs = best_responses(game, ctx, opts)
        t_sub = time.perf_counter() - t1
        sub_time += t_sub
        hit_limit |= any(b.hit_limit for b in brs)
        bounds = [b.bound for b in brs]
        pays = [payoff(game, j, lays[j], pts[j], ctx[j]) for j in range(N)]
        cand = float(sum(max(bounds[j], pays[j]) - pays[j] for j in range(N)))
        if consumer:
            qv = {n: float(x[v]) for n, v in rmp.q.items()}
            pc_star, q_star = _consumer_best(game, prices)
            pc = sum(m.alpha * qv[m.output_node] - 0.5 * m.beta * qv[m.output_node] ** 2
                     - prices[m.output_node] * qv[m.output_node] for m in game.markets)
            cand += max(pc_star - pc, 0.0)
        if cand < eta_u:
            eta_u = cand
            best = (prices, pts, ctx, bounds, it, "S")
        done = all(w_hat[j] >= bounds[j] - eps for j in range(N))
        if consumer:
            w_c = float(x[rmp.w_consumer])
            done = done and w_c >= pc_star - eps
        added = 0
        if not done:
            for j, b in enumerate(brs):
                added += pool.add(j, b.point)
            if consumer:
                added += pool.add_consumer(q_star)
        log.append(IterationRow(it, eta_l, eta_u, t_master, t_sub, pool.size()))
        if on_iteration is not None:
            on_iteration(log[-1])
        if done:
            eta_l = max(eta_l, min(eta_u, res.objective))
            converged = True
            break
        if eta_u - max(eta_l, 0.0) <= eps:
            converged = True
            break
        if opts.early_stop and eta_l > eps:
            break
        if added == 0:
            notes.append("no new cuts generated; stopping")
            break

    eta_l = min(eta_l, eta_u) if eta_u < math.inf else eta_l
    if best is None:
        verdict = NO_EQUILIBRIUM if eta_l > eps else INCONCLUSIVE
        return EquilibriumReport("min-diseq", game.name, game.mode, verdict, {}, [], eta_l, eta_u, [], log,
                                 stats={"iterations": it}, timing={"total_s": time.perf_counter() - t_start},
                                 notes=notes)
    prices, pts, ctx, bounds, ibf, pbf = best
    deltas = [max(bounds[j], payoff(game, j, lays[j], pts[j], ctx[j])) - payoff(game, j, lays[j], pts[j], ctx[j])
              for j in range(N)]
    if eta_l > eps:
        verdict = NO_EQUILIBRIUM
    elif max(deltas) <= eps and not hit_limit:
        verdict = EQUILIBRIUM
    else:
        verdict = INCONCLUSIVE
    if not converged and verdict != NO_EQUILIBRIUM and it >= opts.max_iters:
        notes.append("iteration limit reached")
    stats = {"iterations": it, "cuts_total": pool.size(), "rmp_nodes": rmp_nodes, "hit_limit": hit_limit,
             "converged": converged}
    timing = {"warmstart_s": ws_time, "master_s": master_time, "sub_s": sub_time,
              "total_s": time.perf_counter() - t_start}
    return _report(game, "min-diseq", verdict, prices, pts, eta_l, eta_u, lays, ctx, bounds, log, pbf, ibf,
                   ws_cuts, stats, timing, notes)


def _consumer_best(game: GameInstance, prices) -> tuple[float, dict[str, float]]:
    """Closed-form consumer best response with demand capped at total capacity."""
    val, q = 0.0, {}
    for m in game.markets:
        n = m.output_node
        cap = game.total_capacity(n)
        gain = m.alpha - prices[n]
        if m.beta > 0:
            qn = min(max(gain / m.beta, 0.0), cap)
        else:
            qn = cap if gain > 0 else 0.0
        q[n] = qn
        val += gain * qn - 0.5 * m.beta * qn * qn
    return val, q
