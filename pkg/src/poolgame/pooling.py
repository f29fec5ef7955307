"""Pooling networks, players, markets and the models built from them."""

from __future__ import annotations

import copy
import dataclasses
import math
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .qcqp import BINARY, QcqpModel, QuadExpr, quicksum

PRICE_TAKER = "price_taker"
NASH_COURNOT = "nash_cournot"
MODES = (PRICE_TAKER, NASH_COURNOT)


class InstanceError(ValueError):
    pass


class SemanticError(InstanceError):
    pass


class MalformedNetwork(SemanticError):
    pass


class UnknownInstance(InstanceError):
    pass


class MissingBaseData(InstanceError):
    pass


class MissingPrice(KeyError):
    pass


@dataclass
class PoolingInstance:
    """One player's network and economics.

    Concentrations are fractions. ``cmin``/``cmax`` map output -> spec -> bound;
    missing entries mean 0 and 1 respectively.
    """

    name: str
    inputs: list[str]
    pools: list[str]
    outputs: list[str]
    arcs: list[tuple[str, str]]
    specs: list[str]
    cin: dict[str, dict[str, float]]
    fmax: dict[str, float]
    cvar: dict[str, float]
    cmin: dict[str, dict[str, float]] = field(default_factory=dict)
    cmax: dict[str, dict[str, float]] = field(default_factory=dict)
    fmin: dict[str, float] = field(default_factory=dict)
    cfixed: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.arcs = [(str(a), str(b)) for a, b in self.arcs]
        self.validate()

    def same_data(self, other: "PoolingInstance") -> bool:
        """Equal in everything but the name."""
        return dataclasses.replace(self, name=other.name) == other

    @property
    def nodes(self) -> list[str]:
        return self.inputs + self.pools + self.outputs

    @property
    def has_fixed_costs(self) -> bool:
        return any(self.cfixed.get(i, 0.0) > 0.0 for i in self.inputs)

    def validate(self):
        names = self.nodes
        if len(set(names)) != len(names):
            raise MalformedNetwork(f"{self.name}: duplicate node ids")
        kind = {**{n: "in" for n in self.inputs}, **{n: "pool" for n in self.pools},
                **{n: "out" for n in self.outputs}}
        seen = set()
        for a, b in self.arcs:
            if a not in kind or b not in kind:
                raise MalformedNetwork(f"{self.name}: dangling arc {a}->{b}")
            if (a, b) in seen:
                raise MalformedNetwork(f"{self.name}: duplicate arc {a}->{b}")
            seen.add((a, b))
            if (kind[a], kind[b]) not in (("in", "pool"), ("in", "out"), ("pool", "out")):
                raise MalformedNetwork(f"{self.name}: arc {a}->{b} joins {kind[a]} to {kind[b]}")
        for p in self.pools:
            if not any(b == p for _, b in self.arcs) or not any(a == p for a, _ in self.arcs):
                raise MalformedNetwork(f"{self.name}: pool {p} needs both inflow and outflow")
        for i in self.inputs:
            for k in self.specs:
                c = self.cin.get(i, {}).get(k)
                if c is None:
                    raise SemanticError(f"{self.name}: no concentration of {k} for input {i}")
                if not 0.0 <= c <= 1.0:
                    raise SemanticError(f"{self.name}: concentration {c} of {k} at {i} outside [0,1]")
            if i not in self.cvar:
                raise SemanticError(f"{self.name}: input {i} has no variable cost")
            if self.cfixed.get(i, 0.0) < 0:
                raise SemanticError(f"{self.name}: negative fixed cost at {i}")
        for n in self.inputs + self.outputs:
            if n not in self.fmax or not self.fmax[n] >= 0 or not math.isfinite(self.fmax[n]):
                raise SemanticError(f"{self.name}: node {n} needs a finite nonnegative fmax")
            if self.fmin.get(n, 0.0) > self.fmax[n]:
                raise SemanticError(f"{self.name}: fmin above fmax at {n}")
        for o in self.outputs:
            for k in self.specs:
                lo, hi = self.cmin.get(o, {}).get(k, 0.0), self.cmax.get(o, {}).get(k, 1.0)
                if lo > hi:
                    raise SemanticError(f"{self.name}: spec {k} window at {o} is empty")

    def out_arcs(self, n):
        return [(a, b) for a, b in self.arcs if a == n]

    def in_arcs(self, n):
        return [(a, b) for a, b in self.arcs if b == n]

    def node_cap(self, n) -> float:
        if n in self.fmax and math.isfinite(self.fmax[n]):
            return self.fmax[n]
        if n in self.pools:
            down = sum(self.node_cap(b) for _, b in self.out_arcs(n))
            up = sum(self.node_cap(a) for a, _ in self.in_arcs(n))
            return min(down, up)
        return math.inf


@dataclass
class Market:
    output_node: str
    alpha: float
    beta: float

    def __post_init__(self):
        self.output_node = str(self.output_node)
        if self.beta < 0:
            raise SemanticError(f"market {self.output_node}: negative slope {self.beta}")
        if self.alpha < 0:
            raise SemanticError(f"market {self.output_node}: negative intercept {self.alpha}")

    def price(self, quantity: float) -> float:
        return self.alpha - self.beta * quantity


@dataclass
class GameInstance:
    players: list[PoolingInstance]
    markets: list[Market]
    mode: str = PRICE_TAKER
    name: str = "game"

    def __post_init__(self):
        if self.mode not in MODES:
            raise SemanticError(f"unknown mode {self.mode!r}")
        if not self.players:
            raise SemanticError("a game needs at least one player")
        keys = [m.output_node for m in self.markets]
        if len(set(keys)) != len(keys):
            raise SemanticError("duplicate market for an output node")
        for p in self.players:
            for o in p.outputs:
                if o not in keys:
                    raise SemanticError(f"{p.name}: output {o} has no market")
        self.markets = sorted(self.markets, key=lambda m: _node_key(m.output_node))

    @property
    def market_ids(self) -> list[str]:
        return [m.output_node for m in self.markets]

    def market(self, node: str) -> Market:
        for m in self.markets:
            if m.output_node == node:
                return m
        raise KeyError(node)

    @property
    def n_players(self) -> int:
        return len(self.players)

    @property
    def has_fixed_costs(self) -> bool:
        return any(p.has_fixed_costs for p in self.players)

    def total_capacity(self, node: str) -> float:
        return sum(p.fmax[node] for p in self.players if node in p.outputs)

    def with_mode(self, mode: str) -> "GameInstance":
        g = copy.deepcopy(self)
        g.mode = mode
        g.__post_init__()
        return g


def _node_key(n: str):
    return (0, int(n), "") if re.fullmatch(r"-?\d+", n) else (1, 0, n)


# ---------------------------------------------------------------------------
# feasible set


@dataclass
class PlayerLayout:
    """Local variable indices of one player's block."""

    fin: dict[str, int]
    fout: dict[str, int]
    arc: dict[tuple[str, str], int]
    conc: dict[tuple[str, str], int]
    u: dict[str, int]
    size: int


@dataclass
class FeasibleSet:
    player: PoolingInstance
    layout: PlayerLayout
    model: QcqpModel
    offset: int

    def g(self, local: int) -> int:
        return self.offset + local

    def var(self, local: int, coef: float = 1.0) -> QuadExpr:
        return QuadExpr.var(self.offset + local, coef)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.layout.size)

    def fout_expr(self, node: str) -> QuadExpr:
        return self.var(self.layout.fout[node])

    def cost_expr(self) -> QuadExpr:
        p, lay = self.player, self.layout
        terms = [self.var(lay.fin[i], p.cvar[i]) for i in p.inputs if p.cvar[i] != 0.0]
        terms += [self.var(lay.u[i], p.cfixed.get(i, 0.0)) for i in lay.u if p.cfixed.get(i, 0.0) != 0.0]
        return quicksum(terms)

    def local(self, x_full) -> np.ndarray:
        return np.asarray(x_full, dtype=float)[self.offset:self.offset + self.layout.size].copy()


def build_feasible_set(player: PoolingInstance, model: QcqpModel | None = None,
                       prefix: str = "") -> FeasibleSet:
    """Add one player's flow, blending and spec constraints to ``model``.

    Variables are created contiguously so the player's block is
    ``model.variables[offset:offset+size]``.
    """
    p = player
    if model is None:
        model = QcqpModel(f"feasible[{p.name}]")
    offset = model.n_vars
    pre = prefix or p.name
    use_u = {i for i in p.inputs if p.has_fixed_costs and (p.cfixed.get(i, 0.0) > 0 or p.fmin.get(i, 0.0) > 0)}

    def add(lo, hi, name, kind="continuous"):
        return model.add_variable(lo, hi, kind, f"{pre}.{name}") - offset

    fin, fout, arc, conc, u = {}, {}, {}, {}, {}
    for i in p.inputs:
        lo = 0.0 if i in use_u else p.fmin.get(i, 0.0)
        fin[i] = add(lo, p.fmax[i], f"fin[{i}]")
    for o in p.outputs:
        fout[o] = add(0.0, p.fmax[o], f"fout[{o}]")
    for a, b in p.arcs:
        arc[(a, b)] = add(0.0, min(p.node_cap(a), p.node_cap(b)), f"f[{a},{b}]")
    for q in p.pools:
        feeders = [a for a, _ in p.in_arcs(q)]
        for k in p.specs:
            vals = [p.cin[a][k] for a in feeders]
            conc[(q, k)] = add(min(vals), max(vals), f"c[{q},{k}]")
    for i in sorted(use_u, key=p.inputs.index):
        u[i] = add(0, 1, f"u[{i}]", BINARY)
    lay = PlayerLayout(fin, fout, arc, conc, u, model.n_vars - offset)
    fs = FeasibleSet(p, lay, model, offset)
    v = fs.var

    for i in p.inputs:
        model.add_constraint(v(fin[i]) - quicksum(v(arc[e]) for e in p.out_arcs(i)), "==", 0.0,
                             f"{pre}.in_track[{i}]")
    for o in p.outputs:
        model.add_constraint(v(fout[o]) - quicksum(v(arc[e]) for e in p.in_arcs(o)), "==", 0.0,
                             f"{pre}.out_track[{o}]")
    for q in p.pools:
        model.add_constraint(quicksum(v(arc[e]) for e in p.in_arcs(q))
                             - quicksum(v(arc[e]) for e in p.out_arcs(q)), "==", 0.0, f"{pre}.balance[{q}]")
    for q in p.pools:
        outflow = quicksum(v(arc[e]) for e in p.out_arcs(q))
        for k in p.specs:
            inflow = quicksum(v(arc[(a, q)], p.cin[a][k]) for a, _ in p.in_arcs(q))
            model.add_constraint(inflow - v(conc[(q, k)]) * outflow, "==", 0.0, f"{pre}.blend[{q},{k}]")
    for o in p.outputs:
        for k in p.specs:
            content = QuadExpr()
            for a, _ in p.in_arcs(o):
                if a in p.pools:
                    content += v(conc[(a, k)]) * v(arc[(a, o)])
                else:
                    content += v(arc[(a, o)], p.cin[a][k])
            hi = p.cmax.get(o, {}).get(k, 1.0)
            lo = p.cmin.get(o, {}).get(k, 0.0)
            model.add_constraint(content - v(fout[o], hi), "<=", 0.0, f"{pre}.spec_max[{o},{k}]")
            model.add_constraint(content - v(fout[o], lo), ">=", 0.0, f"{pre}.spec_min[{o},{k}]")
    for i in u:
        model.add_constraint(v(fin[i]) - v(u[i], p.fmax[i]), "<=", 0.0, f"{pre}.semicont_hi[{i}]")
        model.add_constraint(v(fin[i]) - v(u[i], p.fmin.get(i, 0.0)), ">=", 0.0, f"{pre}.semicont_lo[{i}]")
    return fs


def zero_point(fs: FeasibleSet) -> np.ndarray:
    """Shut-down point: no flow, binaries off, concentrations at their lower box."""
    x = np.zeros(fs.layout.size)
    for k, j in fs.layout.conc.items():
        x[j] = fs.model.variables[fs.g(j)].lower
    return x


# ---------------------------------------------------------------------------
# payoffs (numeric, on a player's local vector)


def player_cost(player: PoolingInstance, lay: PlayerLayout, x) -> float:
    c = sum(player.cvar[i] * x[lay.fin[i]] for i in player.inputs)
    c += sum(player.cfixed.get(i, 0.0) * x[j] for i, j in lay.u.items())
    return float(c)


def player_outputs(lay: PlayerLayout, x) -> dict[str, float]:
    return {o: float(x[j]) for o, j in lay.fout.items()}


def price_taker_payoff(player, lay, x, prices: Mapping[str, float]) -> float:
    try:
        rev = sum(prices[o] * x[j] for o, j in lay.fout.items())
    except KeyError as exc:
        raise MissingPrice(f"no price for output {exc.args[0]}") from None
    return float(rev - player_cost(player, lay, x))


def nash_cournot_payoff(player, lay, x, game: GameInstance, rival_totals: Mapping[str, float]) -> float:
    rev = 0.0
    for o, j in lay.fout.items():
        m = game.market(o)
        f = x[j]
        rev += (m.alpha - m.beta * (f + rival_totals.get(o, 0.0))) * f
    return float(rev - player_cost(player, lay, x))


# ---------------------------------------------------------------------------
# objective expressions


def price_taker_objective(fs: FeasibleSet, prices: Mapping[str, float | QuadExpr]) -> QuadExpr:
    """Revenue minus cost. Prices may be numbers or (linear) expressions."""
    rev = QuadExpr()
    for o in fs.player.outputs:
        if o not in prices:
            raise MissingPrice(f"no price for output {o}")
        rev += fs.fout_expr(o) * prices[o]
    return rev - fs.cost_expr()


def consumer_surplus_objective(game: GameInstance, q: Mapping[str, float | QuadExpr],
                               prices: Mapping[str, float | QuadExpr]) -> QuadExpr:
    out = QuadExpr()
    for m in game.markets:
        qn = QuadExpr._coerce(q[m.output_node])
        out += m.alpha * qn - (0.5 * m.beta) * (qn * qn) - qn * prices[m.output_node]
    return out


def consumer_surplus_value(game: GameInstance, q: Mapping[str, float], prices: Mapping[str, float]) -> float:
    return float(sum(m.alpha * q[m.output_node] - 0.5 * m.beta * q[m.output_node] ** 2
                     - prices[m.output_node] * q[m.output_node] for m in game.markets))


def nash_cournot_objective(fs: FeasibleSet, game: GameInstance,
                           rival_outputs: Mapping[str, float | QuadExpr]) -> QuadExpr:
    """Revenue at the inverse-demand price given rivals' output, minus cost."""
    rev = QuadExpr()
    for o in fs.player.outputs:
        m = game.market(o)
        f = fs.fout_expr(o)
        price = m.alpha - m.beta * (f + rival_outputs.get(o, 0.0))
        rev += price * f
    return rev - fs.cost_expr()


# ---------------------------------------------------------------------------
# joint models


@dataclass
class JointModel:
    model: QcqpModel
    sets: list[FeasibleSet]
    q: dict[str, int] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def split(self, x) -> list[np.ndarray]:
        return [fs.local(x) for fs in self.sets]


def _relax_binaries(model: QcqpModel, fs: FeasibleSet):
    for i, j in fs.layout.u.items():
        g = fs.g(j)
        v = model.variables[g]
        model.variables[g] = type(v)(v.index, v.lower, v.upper, "continuous", v.name)


def total_output(sets: list[FeasibleSet], node: str) -> QuadExpr:
    return quicksum(fs.fout_expr(node) for fs in sets if node in fs.player.outputs)


def build_welfare_model(game: GameInstance, projected: bool = False, break_symmetry: bool = True) -> JointModel:
    """Maximize gross consumer benefit minus production cost.

    With ``projected`` the market quantities are substituted out; otherwise a
    quantity variable per market is tied to total supply by an equality row.
    ``break_symmetry`` orders consecutive identical players by total output,
    which leaves the optimal welfare unchanged but makes the split between
    them deterministic.
    """
    model = QcqpModel(f"welfare[{game.name}]")
    sets = [build_feasible_set(p, model, f"p{j + 1}") for j, p in enumerate(game.players)]
    if break_symmetry:
        for j in range(len(sets) - 1):
            a, b = sets[j], sets[j + 1]
            if a.player.same_data(b.player):
                lhs = quicksum(a.fout_expr(o) for o in a.player.outputs)
                rhs = quicksum(b.fout_expr(o) for o in b.player.outputs)
                model.add_constraint(lhs - rhs, ">=", 0.0, f"order[{j + 1},{j + 2}]")
    obj = QuadExpr()
    qv = {}
    for m in game.markets:
        supply = total_output(sets, m.output_node)
        if projected:
            qn = supply
        else:
            cap = game.total_capacity(m.output_node)
            qv[m.output_node] = model.add_variable(0.0, cap, name=f"q[{m.output_node}]")
            qn = model.x(qv[m.output_node])
            model.add_constraint(qn - supply, "==", 0.0, f"clear[{m.output_node}]")
        obj += m.alpha * qn - (0.5 * m.beta) * (qn * qn)
    for fs in sets:
        obj -= fs.cost_expr()
    model.set_objective(obj, "max")
    return JointModel(model, sets, qv)


def build_monolithic_nc_model(game: GameInstance, impose_integrality: bool = True) -> JointModel:
    """Single optimization whose stationarity conditions match the Cournot game."""
    model = QcqpModel(f"mono-nc[{game.name}]")
    sets = [build_feasible_set(p, model, f"p{j + 1}") for j, p in enumerate(game.players)]
    if not impose_integrality:
        for fs in sets:
            _relax_binaries(model, fs)
    obj = QuadExpr()
    for j, fs in enumerate(sets):
        for o in fs.player.outputs:
            m = game.market(o)
            f = fs.fout_expr(o)
            rivals = quicksum(other.fout_expr(o) for i, other in enumerate(sets)
                              if i != j and o in other.player.outputs)
            obj += (m.alpha - m.beta * (f + 0.5 * rivals)) * f
        obj -= fs.cost_expr()
    model.set_objective(obj, "max")
    return JointModel(model, sets)


def recover_prices(game: GameInstance, points: list[np.ndarray], layouts: list[PlayerLayout]) -> dict[str, float]:
    out = {}
    for m in game.markets:
        tot = sum(x[lay.fout[m.output_node]] for x, lay in zip(points, layouts) if m.output_node in lay.fout)
        out[m.output_node] = float(m.alpha - m.beta * tot)
    return out


# ---------------------------------------------------------------------------
# catalog

HAVERLY_SULFUR = {"A": 0.03, "B": 0.01, "C": 0.02}
HAVERLY_COSTS_P1 = {"A": 6.0, "B": 16.0, "C": 10.0}
HAVERLY_COSTS_P2 = {"A": 3.0, "B": 18.0, "C": 11.0}
HAVERLY_MARKETS = {"H": (13.0, 0.02), "L": (23.0, 0.04)}
HAVERLY_FIXED_B = 200.0

# (variable costs per player, fixed cost, {output node: (alpha, beta)})
ADHYA1_MOD = {
    "cvar": [[7, 3, 2, 10, 5], [6, 4, 1, 9, 7]],
    "cfixed": 100.0,
    "inputs": ["1", "2", "3", "4", "5"],
    "demand": {"8": (16.0, 0.0), "9": (32.0, 0.28), "10": (15.0, 0.0), "11": (12.0, 0.20)},
}
BENTAL5_MOD = {
    "cvar": [[6, 16, 15, 12, 10], [7, 14, 13, 15, 10]],
    "cfixed": 200.0,
    "inputs": ["1", "2", "3", "4", "5"],
    "demand": {"9": (25.0, 0.07), "10": (23.0, 0.04), "11": (27.0, 0.08), "12": (22.0, 0.06),
               "13": (17.0, 0.03)},
}


def haverly_player(name: str, costs: Mapping[str, float], fixed_b: float = 0.0) -> PoolingInstance:
    # inputs are capped at total output capacity, which never binds
    return PoolingInstance(
        name=name,
        inputs=["A", "B", "C"],
        pools=["P"],
        outputs=["H", "L"],
        arcs=[("A", "P"), ("B", "P"), ("P", "H"), ("P", "L"), ("C", "H"), ("C", "L")],
        specs=["S"],
        cin={i: {"S": c} for i, c in HAVERLY_SULFUR.items()},
        cmax={"H": {"S": 0.025}, "L": {"S": 0.015}},
        fmax={"A": 300.0, "B": 300.0, "C": 300.0, "P": 300.0, "H": 100.0, "L": 200.0},
        cvar=dict(costs),
        cfixed={"B": fixed_b} if fixed_b else {},
    )


def _haverly_markets():
    return [Market(n, a, b) for n, (a, b) in HAVERLY_MARKETS.items()]


def _apply_mod(base: GameInstance, table: dict, name: str, integer: bool, mode: str) -> GameInstance:
    if len(base.players) < 1:
        raise MissingBaseData(f"{name}: base file holds no network")
    proto = base.players[0]
    missing = [i for i in table["inputs"] if i not in proto.inputs]
    missing += [o for o in table["demand"] if o not in proto.outputs]
    if missing:
        raise MissingBaseData(f"{name}: base network lacks nodes {missing}")
    players = []
    for j, costs in enumerate(table["cvar"]):
        p = copy.deepcopy(proto)
        p.name = f"player{j + 1}"
        p.cvar = dict(p.cvar)
        p.cvar.update({i: float(c) for i, c in zip(table["inputs"], costs)})
        p.cfixed = {i: table["cfixed"] for i in table["inputs"]} if integer else {}
        p.validate()
        players.append(p)
    markets = [Market(o, a, b) for o, (a, b) in table["demand"].items()]
    return GameInstance(players, markets, mode, name)


CATALOG_NAMES = ("haverly-single", "haverly-2p-pc-cont", "haverly-2p-nc-cont", "haverly-2p-pc-mip",
                 "haverly-2p-nc-mip", "haverly-sym-pc(N)", "adhya1-mod", "bental5-mod")


def catalog(name: str, base: str | GameInstance | None = None, integer: bool = True,
            mode: str = PRICE_TAKER) -> GameInstance:
    """Named benchmark games.

    ``base``, ``integer`` and ``mode`` only matter for the Adhya1/Bental5
    variants, whose networks must be supplied as an instance file.
    """
    if name == "haverly-single":
        p = haverly_player("player1", HAVERLY_COSTS_P1)
        return GameInstance([p], [Market("H", 9.0, 0.0), Market("L", 15.0, 0.0)], PRICE_TAKER, name)
    m = re.fullmatch(r"haverly-2p-(pc|nc)-(cont|mip)", name)
    if m:
        fixed = HAVERLY_FIXED_B if m.group(2) == "mip" else 0.0
        players = [haverly_player("player1", HAVERLY_COSTS_P1, fixed),
                   haverly_player("player2", HAVERLY_COSTS_P2, fixed)]
        md = PRICE_TAKER if m.group(1) == "pc" else NASH_COURNOT
        return GameInstance(players, _haverly_markets(), md, name)
    m = re.fullmatch(r"haverly-sym-pc\(?(\d+)\)?", name)
    if m:
        n = int(m.group(1))
        if n < 1:
            raise UnknownInstance(name)
        players = [haverly_player(f"player{j + 1}", HAVERLY_COSTS_P1) for j in range(n)]
        return GameInstance(players, _haverly_markets(), PRICE_TAKER, f"haverly-sym-pc{n}")
    if name in ("adhya1-mod", "bental5-mod"):
        if base is None:
            raise MissingBaseData(f"{name} needs a base network file (instance JSON)")
        if not isinstance(base, GameInstance):
            from .io import load_instance
            base = load_instance(base)
        table = ADHYA1_MOD if name == "adhya1-mod" else BENTAL5_MOD
        return _apply_mod(base, table, name, integer, mode)
    raise UnknownInstance(f"unknown catalog instance {name!r}; known: {', '.join(CATALOG_NAMES)}")
