"""Contextual blocking bandits: LP relaxation, online rounding policies and simulations."""
from cbb.errors import CBBError
from cbb.instance import Instance, named_instance, validate
from cbb.lp import ExtremePoint, compute_gaps, enumerate_extreme_points, solve_lp

__all__ = [
    "CBBError",
    "ExtremePoint",
    "Instance",
    "compute_gaps",
    "enumerate_extreme_points",
    "named_instance",
    "solve_lp",
    "validate",
]
__version__ = "0.1.0"
