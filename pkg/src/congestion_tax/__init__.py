"""Learning marginal-cost taxes for nonatomic congestion games from equilibrium feedback."""
from .errors import (AssumptionError, CongestionTaxError, ContractError, DecompositionError,
                     DegeneratePerturbationError, DomainError, InfeasibleStrategyError,
                     NoPathError, RangeError, SizeError, SolverError)
from .pwl import Grid, KnownIndexSet, PiecewiseLinear, clip, grid_ceil, grid_floor
from .game import (CongestionGame, CostFunction, check_strategy, facility_load, gap,
                   is_epsilon_equilibrium, marginal_cost_tax, pigou_game, potential,
                   potential_gradient, price_of_anarchy, social_cost)
from .equilibrium import EquilibriumFeedback, SolverConfig, best_response, solve_equilibrium
from .netgame import Network, NetworkGame, PathFlow, flow_decompose, pigou_network, shortest_path

__version__ = "0.1.0"
