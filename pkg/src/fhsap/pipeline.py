"""Relax-then-round driver shared by the CLI and the robust comparison."""

from __future__ import annotations

import time
from dataclasses import dataclass

from .formulations import extract_assignment, solve_relaxation
from .instance import Assignment, Instance
from .model import SolveOptions, Status
from .rounding import RoundingOutcome, gra_best_of

__all__ = ["RoundedSolution", "SolverFailure", "solve_and_round"]


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class RoundedSolution:
    kind: str
    lp_value: float
    lp_time: float
    fractional: Assignment
    outcome: RoundingOutcome
    round_time: float

    @property
    def cost(self) -> float:
        return self.outcome.cost.total

    @property
    def assignment(self) -> Assignment:
        return self.outcome.assignment


def solve_and_round(instance: Instance, kind: str = "lp3", trials: int = 5000, seed: int = 0,
                    opts: SolveOptions | None = None) -> RoundedSolution:
    result, index = solve_relaxation(instance, kind, opts)
    if result.status is not Status.OPTIMAL:
        raise SolverFailure(f"{kind} relaxation ended with status {result.status.value}: {result.message}")
    frac = extract_assignment(result, index)
    t0 = time.perf_counter()
    outcome = gra_best_of(instance, frac, trials, seed)
    return RoundedSolution(kind, result.objective, result.time, frac, outcome, time.perf_counter() - t0)
