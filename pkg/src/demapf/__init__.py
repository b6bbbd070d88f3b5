"""Decentralised path finding for spatially extended agents.

Travellers negotiate timed routes with Routers, one per network location,
in synchronous request/propose rounds until every Traveller holds a plan
that no Router had to alter.
"""

from .baselines import brute_force_optimal, priority_plan
from .engine import Engine, EngineConfig, FailureReport, solve
from .netmodel import (
    Kind,
    Location,
    NetworkError,
    RoadNetwork,
    TravellerSpec,
    Unreachable,
    WorldConfig,
    parse_map,
    parse_scenario,
    shortest_path,
    tpp,
    traversal_duration,
)
from .plan import (
    Conflict,
    FirstDeviation,
    Plan,
    ProtocolViolation,
    SolutionSet,
    TimeSlot,
    build_schedule,
    check_consistency,
    plan_cost,
    validate_solution,
)
from .router import Request, allocate_round, precedence_key
from .search import Constraint, constrained_shortest_path
from .traveller import InvariantBreach, Status, Traveller

__version__ = "0.1.0"

__all__ = [
    "brute_force_optimal", "priority_plan", "Engine", "EngineConfig", "FailureReport", "solve",
    "Kind", "Location", "NetworkError", "RoadNetwork", "TravellerSpec", "Unreachable",
    "WorldConfig", "parse_map", "parse_scenario", "shortest_path", "tpp", "traversal_duration",
    "Conflict", "FirstDeviation", "Plan", "ProtocolViolation", "SolutionSet", "TimeSlot",
    "build_schedule", "check_consistency", "plan_cost", "validate_solution", "Request",
    "allocate_round", "precedence_key", "Constraint", "constrained_shortest_path",
    "InvariantBreach", "Status", "Traveller",
]
