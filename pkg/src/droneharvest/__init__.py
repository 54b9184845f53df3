"""Energy-optimal drone data-harvesting paths by homotopy continuation."""

from .estimator import HomotopyPathPlanner
from .geometry import (
    ClusterLayout,
    DronePath,
    Point2,
    PowerModel,
    energy,
    grad_energy,
    grad_length,
    lagrange_residual,
    path_length,
    shrink_toward,
)
from .homotopy import (
    HarvestProblem,
    HomotopyState,
    Trace,
    initial_state,
    run_homotopy,
    solution_at_length,
)
from .ordering import TourOrder, exact_order, heuristic_order
from .scenario import Scenario, bundled_scenario, load_scenario

__all__ = [
    "ClusterLayout",
    "DronePath",
    "HarvestProblem",
    "HomotopyPathPlanner",
    "HomotopyState",
    "Point2",
    "PowerModel",
    "Scenario",
    "TourOrder",
    "Trace",
    "bundled_scenario",
    "energy",
    "exact_order",
    "grad_energy",
    "grad_length",
    "heuristic_order",
    "initial_state",
    "lagrange_residual",
    "load_scenario",
    "path_length",
    "run_homotopy",
    "shrink_toward",
    "solution_at_length",
]

__version__ = "0.1.0"
