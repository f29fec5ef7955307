"""Relaxed master problem of the minimum-disequilibrium decomposition."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..pooling import (PRICE_TAKER, FeasibleSet, GameInstance, build_feasible_set, player_cost, quicksum,
                       total_output, zero_point)
from ..qcqp import QcqpModel, QuadExpr
from .core import EmptyCutPool


@dataclass
class CutPool:
    """Stored feasible points per player (local vectors); duplicates are dropped."""

    points: list[list[np.ndarray]]
    consumer: list[dict[str, float]] = field(default_factory=list)

    @classmethod
    def seeded(cls, game: GameInstance, consumer: bool = False) -> "CutPool":
        pts = []
        for p in game.players:
            fs = build_feasible_set(p)
            z = zero_point(fs)
            if not fs.model.is_feasible(z):
                raise EmptyCutPool(f"{p.name}: shut-down point is infeasible; seed the pool explicitly")
            pts.append([z])
        cons = [{m.output_node: 0.0 for m in game.markets}] if consumer else []
        return cls(pts, cons)

    def add(self, j: int, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        for y in self.points[j]:
            if y.shape == x.shape and np.max(np.abs(y - x), initial=0.0) <= tol * (1.0 + np.abs(x).max(initial=0.0)):
                return False
        self.points[j].append(x.copy())
        return True

    def add_consumer(self, q: dict[str, float]) -> bool:
        for y in self.consumer:
            if all(abs(y[k] - q[k]) <= 1e-9 for k in q):
                return False
        self.consumer.append(dict(q))
        return True

    def size(self, j: int | None = None) -> int:
        if j is None:
            return sum(len(p) for p in self.points) + len(self.consumer)
        return len(self.points[j])


@dataclass
class LinkingSet:
    """Rows tying prices to quantities (price-taker) or nothing extra (Cournot,
    where each player's context is its rivals' output)."""

    mode: str
    stationarity: bool = True


@dataclass
class Rmp:
    model: QcqpModel
    sets: list[FeasibleSet]
    w: list[int]
    pi: dict[str, int]
    q: dict[str, int]
    w_consumer: int | None = None

    def prices(self, x, game: GameInstance) -> dict[str, float]:
        if self.pi:
            return {k: float(x[v]) for k, v in self.pi.items()}
        # Cournot: report market-clearing prices of the candidate
        out = {}
        for m in game.markets:
            tot = sum(x[fs.g(fs.layout.fout[m.output_node])] for fs in self.sets
                      if m.output_node in fs.layout.fout)
            out[m.output_node] = float(m.alpha - m.beta * tot)
        return out


def _w_cap(game: GameInstance, j: int) -> float:
    p = game.players[j]
    return sum(game.market(o).alpha * p.fmax[o] for o in p.outputs)


def build_rmp(game: GameInstance, pool: CutPool, linking: LinkingSet | None = None,
              literal_prices: bool = False) -> Rmp:
    """Minimize total lifted disequilibrium subject to the stored cuts.

    For price-takers the revenue terms ``sum_j pi_n f_jn`` collapse to
    ``pi_n q_n``; with the clearing rows in place this is the concave
    ``alpha q - beta q^2`` (or, with an explicit consumer, cancels against the
    consumer's payment). ``literal_prices`` keeps the products ``pi_n f_jn``
    instead, which gives the same optimum but a much weaker relaxation.
    """
    linking = linking or LinkingSet(game.mode)
    if any(len(p) == 0 for p in pool.points):
        raise EmptyCutPool("every player needs at least one stored point")
    model = QcqpModel(f"rmp[{game.name}]")
    sets = [build_feasible_set(p, model, f"p{j + 1}") for j, p in enumerate(game.players)]
    w = [model.add_variable(-np.inf, _w_cap(game, j), name=f"w[{j + 1}]") for j in range(game.n_players)]
    pi: dict[str, int] = {}
    q: dict[str, int] = {}
    costs = [fs.cost_expr() for fs in sets]
    obj = quicksum(model.x(v) for v in w)
    w_c = None

    if game.mode == PRICE_TAKER:
        consumer = not linking.stationarity
        for m in game.markets:
            n = m.output_node
            cap = game.total_capacity(n)
            q[n] = model.add_variable(0.0, cap, name=f"q[{n}]")
            model.add_constraint(model.x(q[n]) - total_output(sets, n), "==", 0.0, f"clear[{n}]")
            lo = 0.0 if consumer else max(0.0, m.alpha - m.beta * cap)
            pi[n] = model.add_variable(lo, m.alpha, name=f"pi[{n}]")
            if not consumer:
                model.add_constraint(model.x(pi[n]) + model.x(q[n], m.beta), "==", m.alpha, f"stationarity[{n}]")
        if consumer:
            w_c = model.add_variable(-np.inf, sum(m.alpha * game.total_capacity(m.output_node)
                                                  for m in game.markets), name="w[consumer]")
            obj += model.x(w_c)
        if literal_prices:
            for fs in sets:
                for o in fs.player.outputs:
                    obj -= fs.fout_expr(o) * model.x(pi[o])
            if consumer:
                for m in game.markets:
                    qn = model.x(q[m.output_node])
                    obj -= m.alpha * qn - (0.5 * m.beta) * (qn * qn) - qn * model.x(pi[m.output_node])
        else:
            half = 0.5 if consumer else 1.0
            for m in game.markets:
                qn = model.x(q[m.output_node])
                obj -= m.alpha * qn - (half * m.beta) * (qn * qn)
        for c in costs:
            obj += c
        # cuts: w_j >= sum_n fbar_jn pi_n - cost(xbar_j), linear in prices
        for j, fs in enumerate(sets):
            lay = fs.layout
            for k, xb in enumerate(pool.points[j]):
                body = model.x(w[j])
                for o, idx in lay.fout.items():
                    if xb[idx] != 0.0:
                        body -= model.x(pi[o], float(xb[idx]))
                model.add_constraint(body, ">=", -player_cost(fs.player, lay, xb), f"cut[{j + 1},{k}]")
        if consumer:
            for k, qb in enumerate(pool.consumer):
                body = model.x(w_c)
                const = 0.0
                for m in game.markets:
                    v = qb[m.output_node]
                    const += m.alpha * v - 0.5 * m.beta * v * v
                    body += model.x(pi[m.output_node], v)
                model.add_constraint(body, ">=", const, f"cut[consumer,{k}]")
    else:
        for j, fs in enumerate(sets):
            for o in fs.player.outputs:
                m = game.market(o)
                f = fs.fout_expr(o)
                rivals = quicksum(other.fout_expr(o) for i, other in enumerate(sets)
                                  if i != j and o in other.player.outputs)
                obj -= (m.alpha - m.beta * (f + rivals)) * f
            obj += costs[j]
        # cuts: w_j >= sum_n (alpha_n - beta_n (fbar_jn + rivals_n)) fbar_jn - cost(xbar_j)
        for j, fs in enumerate(sets):
            lay = fs.layout
            for k, xb in enumerate(pool.points[j]):
                body = model.x(w[j])
                const = -player_cost(fs.player, lay, xb)
                for o, idx in lay.fout.items():
                    m = game.market(o)
                    fb = float(xb[idx])
                    if fb == 0.0:
                        continue
                    const += (m.alpha - m.beta * fb) * fb
                    for i, other in enumerate(sets):
                        if i != j and o in other.player.outputs:
                            body += other.fout_expr(o) * (m.beta * fb)
                model.add_constraint(body, ">=", const, f"cut[{j + 1},{k}]")
    model.set_objective(obj, "min")
    return Rmp(model, sets, w, pi, q, w_c)
