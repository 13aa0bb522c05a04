"""Stochastic conflict-based allocation of tasks with time windows to robots."""

from scoba.cbs import allocate, expand_conflicts, generate_child, search, tie_break
from scoba.core import (
    Allocation,
    InputError,
    ProblemInstance,
    ResourceError,
    StructuralError,
    TaskSpec,
    TimeWindow,
)
from scoba.policy_tree import plan_tree

__all__ = [
    "Allocation",
    "InputError",
    "ProblemInstance",
    "ResourceError",
    "StructuralError",
    "TaskSpec",
    "TimeWindow",
    "allocate",
    "expand_conflicts",
    "generate_child",
    "plan_tree",
    "search",
    "tie_break",
]
