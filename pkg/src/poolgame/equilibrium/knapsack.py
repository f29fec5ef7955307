"""KKT points versus true equilibria in the binary knapsack Cournot game.

Relaxing each binary to [0, 1] with x(1 - x) = 0 and writing every player's
first-order conditions gives a system that every feasible binary profile
satisfies, so solving it says nothing about stability.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..counterexamples import KnapsackGame, TooLarge, brute_force_equilibria

MAX_ITEMS = 12


@dataclass
class KktMultipliers:
    budget: np.ndarray       # one per player, on the knapsack row
    binary: np.ndarray       # players x markets, on x(1 - x) = 0
    upper: np.ndarray        # on x <= 1
    lower: np.ndarray        # on x >= 0


@dataclass
class KnapsackDemoResult:
    profiles: list[tuple]             # every feasible profile, one 0/1 tuple per player
    kkt_feasible: list[tuple]
    residuals: dict                   # profile -> max KKT residual
    equilibria: list[tuple]

    @property
    def strict_subset(self) -> bool:
        eq = set(self.equilibria)
        return eq <= set(self.kkt_feasible) and len(eq) < len(self.kkt_feasible)


def marginal_revenue(game: KnapsackGame, profile, j: int, l: int) -> float:
    """Net marginal revenue of market l for player j, rivals' entries held fixed."""
    rivals = sum(profile[i][l] for i in range(game.n_players) if i != j)
    return game.alpha[l] - game.cost[j][l] - game.beta[l] * rivals


def construct_multipliers(game: KnapsackGame, profile) -> KktMultipliers:
    """Budget prices zero; the bound multiplier on the inactive side is zero and
    the binary multiplier absorbs the whole gradient."""
    N, L = game.n_players, len(game.alpha)
    gam = np.zeros((N, L))
    for j in range(N):
        for l in game.markets[j]:
            g = marginal_revenue(game, profile, j, l)
            if profile[j][l] >= 0.5:
                gam[j, l] = g - 2.0 * game.beta[l]
            else:
                gam[j, l] = -g
    return KktMultipliers(np.zeros(N), gam, np.zeros((N, L)), np.zeros((N, L)))


def kkt_residual(game: KnapsackGame, profile, mult: KktMultipliers) -> float:
    """Largest violation of stationarity, complementarity and sign conditions."""
    worst = 0.0
    for j in range(game.n_players):
        x = np.asarray(profile[j], dtype=float)
        slack = game.capacity[j] - sum(game.weight[j][l] * x[l] for l in range(len(x)))
        worst = max(worst, max(-slack, 0.0), abs(slack * mult.budget[j]), max(-mult.budget[j], 0.0))
        for l in game.markets[j]:
            stat = (marginal_revenue(game, profile, j, l) - 2.0 * game.beta[l] * x[l]
                    - mult.budget[j] * game.weight[j][l] + mult.binary[j, l] - 2.0 * mult.binary[j, l] * x[l]
                    - mult.upper[j, l] + mult.lower[j, l])
            worst = max(worst, abs(stat),
                        abs(mult.binary[j, l] * x[l] * (1.0 - x[l])),
                        abs((1.0 - x[l]) * mult.upper[j, l]), abs(x[l] * mult.lower[j, l]),
                        max(-mult.upper[j, l], 0.0), max(-mult.lower[j, l], 0.0),
                        max(-x[l], 0.0), max(x[l] - 1.0, 0.0))
    return float(worst)


def knapsack_kkt_demo(game: KnapsackGame, tol: float = 1e-9) -> KnapsackDemoResult:
    if game.n_items > MAX_ITEMS:
        raise TooLarge(f"{game.n_items} items; enumeration is limited to {MAX_ITEMS}")
    choices = [game.feasible_choices(j) for j in range(game.n_players)]
    profiles = list(itertools.product(*choices))
    kkt, res = [], {}
    for prof in profiles:
        r = kkt_residual(game, prof, construct_multipliers(game, prof))
        res[prof] = r
        if r <= tol:
            kkt.append(prof)
    eq = brute_force_equilibria(game.as_discrete())
    return KnapsackDemoResult(profiles, kkt, res, eq)
