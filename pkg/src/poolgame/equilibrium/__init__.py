from .core import (EQUILIBRIUM, INCONCLUSIVE, NO_EQUILIBRIUM, EmptyCutPool, EngineOptions, EquilibriumReport,
                   InfeasiblePoint, IterationRow, PlayerReport, SubproblemResult, ZeroBetaAxis, solve_subproblem,
                   verify)
from .master import CutPool, LinkingSet, Rmp, build_rmp
from .algorithm import WarmstartResult, min_disequilibrium, random_prices, warmstart_nc, warmstart_pt
from .heuristics import JacobiResult, jacobi, monolithic_nc_heuristic, welfare_heuristic
from .mesh import MeshResult, mesh_grid
from .knapsack import knapsack_kkt_demo
