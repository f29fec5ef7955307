"""Small non-pooling games that show where complementarity-style heuristics break."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .globalsolve import UnboundedBox, solve_global
from .qcqp import QcqpModel

MAX_PROFILES = 2 ** 20


class TooLarge(ValueError):
    pass


@dataclass
class DiscreteGame:
    """Finite game: a strategy list per player and a payoff function.

    ``payoff(j, profile)`` returns player j's payoff (to be maximized) for a
    tuple holding one strategy per player.
    """

    strategies: list[list]
    payoff: Callable[[int, tuple], float]

    @property
    def n_profiles(self) -> int:
        return math.prod(len(s) for s in self.strategies)


def brute_force_equilibria(game: DiscreteGame, tol: float = 0.0) -> list[tuple]:
    """All pure (weak) Nash equilibria, in lexicographic profile order.

    A unilateral deviation that only ties the current payoff does not disqualify
    a profile.
    """
    if game.n_profiles > MAX_PROFILES:
        raise TooLarge(f"{game.n_profiles} profiles exceeds the enumeration limit of {MAX_PROFILES}")
    out = []
    for prof in itertools.product(*game.strategies):
        stable = True
        for j, options in enumerate(game.strategies):
            cur = game.payoff(j, prof)
            for s in options:
                if s == prof[j]:
                    continue
                dev = prof[:j] + (s,) + prof[j + 1:]
                if game.payoff(j, dev) > cur + tol:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            out.append(prof)
    return out


def table_game(payoffs: np.ndarray) -> DiscreteGame:
    """Two-player bimatrix game; ``payoffs[j][a, b]`` is player j's payoff."""
    P = np.asarray(payoffs, dtype=float)
    return DiscreteGame([list(range(P.shape[1])), list(range(P.shape[2]))],
                        lambda j, prof: float(P[j][prof[0], prof[1]]))


# ---------------------------------------------------------------------------
# two-player bilinear game: player j minimizes x_j * x_{-j}


@dataclass
class BoxBilinearGame:
    """Each player minimizes ``x_j * x_other`` with ``x_j`` in ``[-M, M]``."""

    M: float

    def __post_init__(self):
        if not (self.M > 0 and math.isfinite(self.M)):
            raise ValueError("box half-width must be positive and finite")

    def cost(self, j: int, x: Sequence[float]) -> float:
        return float(x[0] * x[1])

    def monolithic_model(self) -> QcqpModel:
        return bilinear_monolithic_model(-self.M, self.M)

    def best_response(self, j: int, x: Sequence[float]) -> tuple[float, float]:
        """Minimizer and minimum of player j's cost with the rival fixed."""
        other = float(x[1 - j])
        m = QcqpModel(f"br{j + 1}")
        v = m.add_variable(-self.M, self.M, name=f"x{j + 1}")
        m.set_objective(m.x(v, other), "min")
        res = solve_global(m, rel_gap=0.0, abs_gap=1e-12)
        return float(res.point[0]), float(res.objective)

    def deltas(self, x: Sequence[float]) -> list[float]:
        """Gain each player could obtain by deviating alone."""
        return [self.cost(j, x) - self.best_response(j, x)[1] for j in range(2)]


def bilinear_monolithic_model(lower: float, upper: float) -> QcqpModel:
    """``min x1 * x2`` over a common box; its stationarity system is the game's."""
    m = QcqpModel("monolithic-bilinear")
    a = m.add_variable(lower, upper, name="x1")
    b = m.add_variable(lower, upper, name="x2")
    m.set_objective(m.x(a) * m.x(b), "min")
    return m


@dataclass
class BoxResult:
    M: float
    optimum: float
    point: list[float]
    point_deltas: list[float]
    origin_deltas: list[float]


@dataclass
class BoxGameReport:
    boxes: list[BoxResult] = field(default_factory=list)
    unboxed: str = ""

    @property
    def optima(self) -> list[float]:
        return [b.optimum for b in self.boxes]


def appendix_b_demo(Ms: Sequence[float] = (1.0, 10.0, 100.0)) -> BoxGameReport:
    """Monolithic optima diverge as the box grows while the origin stays an equilibrium."""
    if not Ms:
        raise ValueError("need at least one box size")
    rep = BoxGameReport()
    for M in Ms:
        g = BoxBilinearGame(float(M))
        res = solve_global(g.monolithic_model(), rel_gap=0.0, abs_gap=1e-9)
        x = [float(v) for v in res.point]
        rep.boxes.append(BoxResult(float(M), float(res.objective), x, g.deltas(x), g.deltas([0.0, 0.0])))
    try:
        solve_global(bilinear_monolithic_model(-math.inf, math.inf))
        rep.unboxed = "solved"
    except UnboundedBox as exc:
        rep.unboxed = f"unbounded: {exc}"
    return rep


# ---------------------------------------------------------------------------
# binary knapsack Cournot game


@dataclass
class KnapsackGame:
    """Players pick markets (items) under a knapsack budget.

    ``alpha``/``beta`` are per-market inverse-demand data; ``cost[j][l]`` and
    ``weight[j][l]`` are player j's cost and resource use in market l; a
    player may enter only markets listed in ``markets[j]`` (all by default).
    """

    alpha: list[float]
    beta: list[float]
    cost: list[list[float]]
    weight: list[list[float]]
    capacity: list[float]
    markets: list[list[int]] | None = None

    def __post_init__(self):
        L = len(self.alpha)
        if len(self.beta) != L:
            raise ValueError("alpha and beta need one entry per market")
        if self.markets is None:
            self.markets = [list(range(L)) for _ in self.cost]
        for j in range(self.n_players):
            if len(self.cost[j]) != L or len(self.weight[j]) != L:
                raise ValueError(f"player {j + 1}: cost and weight need one entry per market")
            if min(self.weight[j]) < 0 or self.capacity[j] < 0:
                raise ValueError("weights and capacities must be nonnegative")
        vals = [*self.alpha, *self.beta, *self.capacity] + [v for r in self.cost + self.weight for v in r]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("knapsack data must be finite")

    @property
    def n_players(self) -> int:
        return len(self.cost)

    @property
    def n_items(self) -> int:
        return sum(len(m) for m in self.markets)

    def feasible_choices(self, j: int) -> list[tuple[int, ...]]:
        """Player j's feasible 0/1 vectors over all markets (unavailable markets stay 0)."""
        L = len(self.alpha)
        own = self.markets[j]
        out = []
        for bits in itertools.product((0, 1), repeat=len(own)):
            x = [0] * L
            for l, b in zip(own, bits):
                x[l] = b
            if sum(self.weight[j][l] * x[l] for l in range(L)) <= self.capacity[j] + 1e-12:
                out.append(tuple(x))
        return out

    def payoff(self, j: int, profile: Sequence[Sequence[float]]) -> float:
        L = len(self.alpha)
        tot = [sum(p[l] for p in profile) for l in range(L)]
        x = profile[j]
        return float(sum((self.alpha[l] - self.beta[l] * tot[l]) * x[l] - self.cost[j][l] * x[l] for l in range(L)))

    def as_discrete(self) -> DiscreteGame:
        return DiscreteGame([self.feasible_choices(j) for j in range(self.n_players)],
                            lambda j, prof: self.payoff(j, prof))


def demo_knapsack_game() -> KnapsackGame:
    """Two players, two markets; player 1 can afford one market, player 2 both."""
    return KnapsackGame(alpha=[10.0, 8.0], beta=[6.0, 5.0],
                        cost=[[3.0, 2.0], [2.0, 4.0]],
                        weight=[[2.0, 3.0], [1.0, 1.0]],
                        capacity=[4.0, 2.0])
