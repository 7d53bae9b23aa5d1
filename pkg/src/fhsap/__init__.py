"""Fixed-hub single allocation: relaxations, geometric rounding and a robust variant."""

from __future__ import annotations

from .exact import brute_force
from .formulations import eval_cost, eval_cost_fractional, extract_assignment, solve_relaxation
from .instance import Assignment, Instance, generate_random, load, save, validate
from .pipeline import solve_and_round
from .robust import UncertaintySet, robust_solve, worst_case_cost
from .rounding import gra_best_of, gra_round

__all__ = [
    "Assignment", "Instance", "UncertaintySet",
    "brute_force", "eval_cost", "eval_cost_fractional", "extract_assignment",
    "generate_random", "gra_best_of", "gra_round", "load", "robust_solve",
    "save", "solve_and_round", "solve_relaxation", "validate", "worst_case_cost",
]
