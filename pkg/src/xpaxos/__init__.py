"""Cross fault-tolerant state machine replication.

The package contains a deterministic simulator for the replication protocol
(common case, view change, fault detection), consistency/liveness checkers,
and exact reliability formulas with an enumeration oracle.
"""

from .core import FaultCensus, Principal, count_partitioned, in_anarchy, synchronous_group_for_view
from .scenario import Scenario, ScenarioError, load, validate
from .sim import RunResult, Simulator, simulate

__all__ = [
    "FaultCensus",
    "Principal",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "Simulator",
    "count_partitioned",
    "in_anarchy",
    "load",
    "simulate",
    "synchronous_group_for_view",
    "validate",
]

__version__ = "0.1.0"
