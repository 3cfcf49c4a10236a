"""Vehicle routing with time windows and synchronized special visits.

The search is an adaptive large neighborhood search whose insertion
feasibility checks are solved as difference-constraint linear programs.
"""

from .alns import LpAlnsSolver, NoInitialSolution, OperatorBank, SearchConfig, initial_solution, run
from .exact import InstanceTooLarge, TinyLimit, solve_exact
from .instance import (
    Instance,
    RawVrptw,
    SyncInstanceTransformer,
    Vertex,
    VrptwParseError,
    load_instance,
    parse_vrptw,
    read_vrptw,
    transform,
)
from .solution import Solution, Violation, cost, validate
from .temporal import TemporalProblem, max_delay_single, max_delays_all, schedule

__version__ = "0.1.0"

__all__ = [
    "Instance",
    "InstanceTooLarge",
    "LpAlnsSolver",
    "NoInitialSolution",
    "OperatorBank",
    "RawVrptw",
    "SearchConfig",
    "Solution",
    "SyncInstanceTransformer",
    "TemporalProblem",
    "TinyLimit",
    "Vertex",
    "Violation",
    "VrptwParseError",
    "cost",
    "initial_solution",
    "load_instance",
    "max_delay_single",
    "max_delays_all",
    "parse_vrptw",
    "read_vrptw",
    "run",
    "schedule",
    "solve_exact",
    "transform",
    "validate",
]
