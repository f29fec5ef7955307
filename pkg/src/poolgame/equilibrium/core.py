"""Shared pieces of the equilibrium engine: options, best responses, verification, reports."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..globalsolve import SolveOptions, solve_global
from ..pooling import (NASH_COURNOT, PRICE_TAKER, FeasibleSet, GameInstance, PlayerLayout, build_feasible_set,
                       nash_cournot_objective, nash_cournot_payoff, price_taker_objective, price_taker_payoff,
                       zero_point)

EQUILIBRIUM = "equilibrium"
NO_EQUILIBRIUM = "no-equilibrium-certified"
INCONCLUSIVE = "inconclusive"
ZERO_OVER_ZERO = "0/0"


class InfeasiblePoint(ValueError):
    pass


class EmptyCutPool(ValueError):
    pass


class ZeroBetaAxis(ValueError):
    pass


@dataclass
class EngineOptions:
    """Tolerances and limits for equilibrium computations.

    ``rel_gap`` applies to the single-model heuristics; best responses and
    master problems are solved to an absolute gap of ``eps * sub_gap_frac``
    because their results are compared against ``eps`` directly.
    """

    eps: float = 1e-3
    rel_gap: float = 1e-4
    sub_gap_frac: float = 0.1
    sub_time_limit: float | None = 60.0
    rmp_time_limit: float | None = 600.0
    max_iters: int = 100
    early_stop: bool = False
    seeds: tuple = ()
    consumer_as_player: bool = False
    workers: int = 1

    def sub_solve_options(self) -> SolveOptions:
        return SolveOptions(rel_gap=0.0, abs_gap=self.eps * self.sub_gap_frac, time_limit=self.sub_time_limit)

    def master_solve_options(self) -> SolveOptions:
        return SolveOptions(rel_gap=0.0, abs_gap=self.eps * self.sub_gap_frac, time_limit=self.rmp_time_limit)

    def heuristic_solve_options(self) -> SolveOptions:
        return SolveOptions(rel_gap=self.rel_gap, abs_gap=self.eps * self.sub_gap_frac,
                            time_limit=self.rmp_time_limit)


@dataclass
class SubproblemResult:
    point: np.ndarray
    value: float      # payoff of the incumbent (primal)
    bound: float      # dual bound on the best achievable payoff
    status: str
    hit_limit: bool
    time_s: float
    nodes: int


def layouts(game: GameInstance) -> list[PlayerLayout]:
    return [build_feasible_set(p).layout for p in game.players]


def rival_totals(game: GameInstance, lays, points, j) -> dict[str, float]:
    out = {}
    for i, (lay, x) in enumerate(zip(lays, points)):
        if i == j:
            continue
        for o, k in lay.fout.items():
            out[o] = out.get(o, 0.0) + float(x[k])
    return out


def market_totals(lays, points) -> dict[str, float]:
    out = {}
    for lay, x in zip(lays, points):
        for o, k in lay.fout.items():
            out[o] = out.get(o, 0.0) + float(x[k])
    return out


def payoff(game: GameInstance, j: int, lay: PlayerLayout, x, context) -> float:
    """Player j's payoff at its local point under prices (price-taker) or rivals' totals (Cournot)."""
    p = game.players[j]
    if game.mode == PRICE_TAKER:
        return price_taker_payoff(p, lay, x, context)
    return nash_cournot_payoff(p, lay, x, game, context)


def subproblem_model(game: GameInstance, j: int, context) -> FeasibleSet:
    fs = build_feasible_set(game.players[j])
    if game.mode == PRICE_TAKER:
        obj = price_taker_objective(fs, context)
    else:
        obj = nash_cournot_objective(fs, game, context)
    fs.model.set_objective(obj, "max")
    return fs


def solve_subproblem(game: GameInstance, j: int, context, options: SolveOptions | None = None) -> SubproblemResult:
    """Best response of player ``j``: prices for price-takers, rivals' total
    output per market for Cournot players."""
    fs = subproblem_model(game, j, context)
    opts = options or EngineOptions().sub_solve_options()
    opts = SolveOptions(**{**opts.__dict__, "start_points": [zero_point(fs)]})
    t0 = time.perf_counter()
    res = solve_global(fs.model, opts)
    return SubproblemResult(res.point, res.objective, res.bound, res.status, res.hit_limit,
                            time.perf_counter() - t0, res.nodes)


def _sub_task(args):
    game, j, context, opts = args
    return solve_subproblem(game, j, context, opts)


def parallel_map(fn, tasks, workers: int = 1):
    """Ordered map; a process pool when ``workers > 1``."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def best_responses(game, contexts, opts: EngineOptions) -> list[SubproblemResult]:
    so = opts.sub_solve_options()
    return parallel_map(_sub_task, [(game, j, contexts[j], so) for j in range(game.n_players)], opts.workers)


def contexts_for(game: GameInstance, lays, points, prices) -> list:
    if game.mode == PRICE_TAKER:
        return [dict(prices) for _ in game.players]
    return [rival_totals(game, lays, points, j) for j in range(game.n_players)]


# ---------------------------------------------------------------------------
# reports


@dataclass
class PlayerReport:
    name: str
    profit: float
    profit_ub: float
    delta: float
    rgap: float | str
    ws_cuts: int = 0

    @property
    def rgap_percent(self) -> str:
        if isinstance(self.rgap, str):
            return self.rgap
        return f"{100.0 * self.rgap:.4f}"


@dataclass
class IterationRow:
    iter: int
    eta_lb: float
    eta_ub: float
    master_time_s: float
    sub_time_s: float
    cuts_total: int


@dataclass
class EquilibriumReport:
    method: str
    game: str
    mode: str
    verdict: str
    prices: dict[str, float]
    points: list[np.ndarray]
    eta_lower: float
    eta_upper: float
    players: list[PlayerReport]
    log: list[IterationRow] = field(default_factory=list)
    pbf: str = "S"
    ibf: int = 0
    stats: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def profits(self) -> list[float]:
        return [p.profit for p in self.players]

    @property
    def deltas(self) -> list[float]:
        return [p.delta for p in self.players]

    @property
    def max_delta(self) -> float:
        return max(self.deltas) if self.players else 0.0


def rgap(delta: float, bound: float) -> float | str:
    if abs(bound) <= 1e-9:
        return ZERO_OVER_ZERO if abs(delta) <= 1e-9 else math.inf
    return delta / bound


def check_linking(game: GameInstance, lays, points, prices, tol=1e-6, stationarity=True):
    """Raise InfeasiblePoint unless prices clear every market (price-takers)."""
    if game.mode != PRICE_TAKER or not stationarity:
        return
    tot = market_totals(lays, points)
    for m in game.markets:
        want = m.alpha - m.beta * tot.get(m.output_node, 0.0)
        if abs(prices[m.output_node] - want) > tol * (1.0 + abs(want)):
            raise InfeasiblePoint(f"price {prices[m.output_node]} at {m.output_node} does not clear the market "
                                  f"(inverse demand gives {want})")


def check_player_points(game: GameInstance, points, tol=1e-6):
    for j, (p, x) in enumerate(zip(game.players, points)):
        fs = build_feasible_set(p)
        if len(x) != fs.layout.size:
            raise InfeasiblePoint(f"player {j + 1}: point has {len(x)} entries, expected {fs.layout.size}")
        if not fs.model.is_feasible(np.asarray(x, float), tol):
            raise InfeasiblePoint(f"player {j + 1}: point violates its feasible set")


@dataclass
class Verification:
    players: list[PlayerReport]
    verdict: str
    hit_limit: bool
    best_responses: list[SubproblemResult]

    @property
    def deltas(self):
        return [p.delta for p in self.players]


def verify(game: GameInstance, prices, points, options: EngineOptions | None = None,
           check_prices: bool = True) -> Verification:
    """Disequilibrium of each player at ``(prices, points)``.

    For Cournot games ``prices`` is ignored; each player faces its rivals' output.
    """
    opts = options or EngineOptions()
    points = [np.asarray(x, dtype=float) for x in points]
    lays = layouts(game)
    check_player_points(game, points)
    if game.mode == PRICE_TAKER and check_prices:
        check_linking(game, lays, points, prices, stationarity=not opts.consumer_as_player)
    ctx = contexts_for(game, lays, points, prices)
    brs = best_responses(game, ctx, opts)
    reps = []
    ok = True
    for j, (lay, x, br) in enumerate(zip(lays, points, brs)):
        pj = payoff(game, j, lay, x, ctx[j])
        ub = max(br.bound, pj)
        d = ub - pj
        reps.append(PlayerReport(game.players[j].name, pj, ub, d, rgap(d, ub)))
        if d > opts.eps * (1.0 + abs(ub)):
            ok = False
    hit = any(b.hit_limit for b in brs)
    verdict = EQUILIBRIUM if ok and not hit else INCONCLUSIVE
    return Verification(reps, verdict, hit, brs)


def named_point(fs_layout: PlayerLayout, x) -> dict:
    return {
        "fin": {k: float(x[v]) for k, v in fs_layout.fin.items()},
        "fout": {k: float(x[v]) for k, v in fs_layout.fout.items()},
        "arcs": {f"{a}->{b}": float(x[v]) for (a, b), v in fs_layout.arc.items()},
        "conc": {f"{q},{k}": float(x[v]) for (q, k), v in fs_layout.conc.items()},
        "u": {k: float(round(x[v])) for k, v in fs_layout.u.items()},
    }


def point_from_named(fs_layout: PlayerLayout, d: dict) -> np.ndarray:
    """Inverse of :func:`named_point`; missing entries stay zero."""
    x = np.zeros(fs_layout.size)
    for k, v in d.get("fin", {}).items():
        x[fs_layout.fin[k]] = v
    for k, v in d.get("fout", {}).items():
        x[fs_layout.fout[k]] = v
    for k, v in d.get("arcs", {}).items():
        a, b = k.split("->")
        x[fs_layout.arc[(a, b)]] = v
    for k, v in d.get("conc", {}).items():
        q, s = k.split(",")
        x[fs_layout.conc[(q, s)]] = v
    for k, v in d.get("u", {}).items():
        x[fs_layout.u[k]] = v
    return x
