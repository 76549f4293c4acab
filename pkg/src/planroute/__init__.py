"""Planner equilibria and punishment strategies for repeated selfish routing."""

__version__ = "0.1.0"

from .equilibrium import (  # noqa: E402
    EquilibriumSolution,
    Partition,
    best_response,
    best_response_iteration_oracle,
    one_shot_planner_cost,
    solve_planner_equilibrium,
    verify_planner_equilibrium,
)
from .intervals import IntervalSet, rotate_assignment  # noqa: E402
from .network import Network, enumerate_paths, optimal_flow, pigou, total_cost  # noqa: E402

__all__ = [
    "EquilibriumSolution",
    "IntervalSet",
    "Network",
    "Partition",
    "best_response",
    "best_response_iteration_oracle",
    "enumerate_paths",
    "one_shot_planner_cost",
    "optimal_flow",
    "pigou",
    "rotate_assignment",
    "solve_planner_equilibrium",
    "total_cost",
    "verify_planner_equilibrium",
]
