"""Disequilibrium over a price grid for price-taker games.

Fixing prices decouples everything: each player's best payoff is a separate
solve, and the joint problem becomes "supply exactly the demanded quantities
as cheaply as possible". Their difference is the least disequilibrium
attainable at those prices.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..globalsolve import Infeasible, solve_global
from ..pooling import PRICE_TAKER, GameInstance, build_feasible_set, quicksum, zero_point
from .core import EngineOptions, ZeroBetaAxis, parallel_map, solve_subproblem

DEFAULT_STEP = 0.10


@dataclass
class MeshResult:
    axes: list[str]                      # market nodes, in grid order
    values: list[np.ndarray]             # grid coordinates per axis
    eta: np.ndarray                      # shape (len(values[0]), len(values[1]), ...)
    time_s: float = 0.0
    hit_limit: bool = False
    stats: dict = field(default_factory=dict)

    def argmin(self) -> tuple[dict[str, float], float]:
        if not np.isfinite(self.eta).any():
            return {}, math.inf
        idx = np.unravel_index(int(np.argmin(self.eta)), self.eta.shape)
        return {a: float(v[i]) for a, v, i in zip(self.axes, self.values, idx)}, float(self.eta[idx])


def grid_values(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive grid from ``lo`` to ``hi``; values are rounded so that 10.0 is 10.0."""
    if step <= 0:
        raise ValueError("grid step must be positive")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    digits = max(0, -int(math.floor(math.log10(step))) + 2)
    return np.round(lo + step * np.arange(n), digits)


def default_ranges(game: GameInstance) -> dict[str, tuple[float, float]]:
    """Prices reachable under market clearing: from full capacity up to the intercept."""
    out = {}
    for m in game.markets:
        out[m.output_node] = (max(0.0, m.alpha - m.beta * game.total_capacity(m.output_node)), m.alpha)
    return out


def _best_payoffs(game: GameInstance, prices, opts: EngineOptions):
    """Best payoff per player at fixed prices; identical players share one solve."""
    so = opts.sub_solve_options()
    out: list[float | None] = [None] * game.n_players
    hit = False
    for j, p in enumerate(game.players):
        if out[j] is not None:
            continue
        r = solve_subproblem(game, j, prices, so)
        hit |= r.hit_limit
        for i in range(j, game.n_players):
            if out[i] is None and game.players[i].same_data(p):
                out[i] = r.bound
    return out, hit


def restricted_welfare(game: GameInstance, prices, opts: EngineOptions) -> tuple[float, bool]:
    """Most total profit the players can earn while supplying exactly what the
    prices demand; ``-inf`` when that supply is impossible."""
    from ..qcqp import QcqpModel

    model = QcqpModel("restriction")
    sets = [build_feasible_set(p, model, f"p{j + 1}") for j, p in enumerate(game.players)]
    revenue = 0.0
    for m in game.markets:
        n = m.output_node
        demand = (m.alpha - prices[n]) / m.beta
        if demand < -1e-9 or demand > game.total_capacity(n) + 1e-9:
            return -math.inf, False
        supply = quicksum(fs.fout_expr(n) for fs in sets if n in fs.player.outputs)
        model.add_constraint(supply, "==", demand, f"demand[{n}]")
        revenue += prices[n] * demand
    model.set_objective(quicksum(fs.cost_expr() for fs in sets), "min")
    try:
        res = solve_global(model, opts.sub_solve_options())
    except Infeasible:
        return -math.inf, False
    if res.point is None:
        return -math.inf, True
    # the dual bound keeps the cell value a valid lower bound on disequilibrium
    return revenue - res.bound, res.hit_limit


def cell_eta(game: GameInstance, prices, opts: EngineOptions) -> tuple[float, bool]:
    best, hit1 = _best_payoffs(game, prices, opts)
    welfare, hit2 = restricted_welfare(game, prices, opts)
    if welfare == -math.inf:
        return math.inf, hit1 or hit2
    return float(sum(best) - welfare), hit1 or hit2


def _cell_task(args):
    game, prices, opts = args
    return cell_eta(game, prices, opts)


def mesh_grid(game: GameInstance, ranges: dict[str, tuple[float, float]] | None = None,
              step: float = DEFAULT_STEP, options: EngineOptions | None = None) -> MeshResult:
    """Evaluate the price-grid disequilibrium; cells whose demand cannot be met are ``inf``."""
    if game.mode != PRICE_TAKER:
        raise ValueError("mesh grids are defined for price-taker games")
    opts = options or EngineOptions()
    ranges = dict(ranges or default_ranges(game))
    for m in game.markets:
        if m.beta == 0.0:
            raise ZeroBetaAxis(f"market {m.output_node} has zero slope; prices do not determine demand")
    missing = [m.output_node for m in game.markets if m.output_node not in ranges]
    if missing:
        raise ValueError(f"no grid range for markets {missing}")
    axes = [m.output_node for m in game.markets]
    values = [grid_values(*ranges[a], step) for a in axes]
    t0 = time.perf_counter()
    cells = [dict(zip(axes, (float(v) for v in combo))) for combo in _product(values)]
    out = parallel_map(_cell_task, [(game, c, opts) for c in cells], opts.workers)
    eta = np.array([v for v, _ in out], dtype=float).reshape([len(v) for v in values])
    hit = any(h for _, h in out)
    return MeshResult(axes, values, eta, time.perf_counter() - t0, hit, {"cells": len(cells)})


def _product(values):
    grids = np.meshgrid(*values, indexing="ij")
    return zip(*(g.ravel() for g in grids))
