"""Exhaustive enumeration over all ``k**n`` single-allocation maps.

Maps are visited in lexicographic order with terminal 0 as the most
significant digit, so the first minimizer found is the lexicographically
smallest one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .formulations import eval_cost_batch
from .instance import Assignment, Instance

__all__ = ["ExactResult", "EnumerationCapError", "DEFAULT_CAP", "brute_force", "all_hub_maps"]

DEFAULT_CAP = 10**7


class EnumerationCapError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExactResult:
    assignment: Assignment
    cost: float
    enumerated: int


def all_hub_maps(n: int, k: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows ``start..stop-1`` of the lexicographic list of hub maps."""
    stop = k**n if stop is None else stop
    codes = np.arange(start, stop, dtype=np.int64)
    weights = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (codes[:, None] // weights[None, :]) % k


def brute_force(
    instance: Instance,
    cap: int = DEFAULT_CAP,
    objective: Callable[[np.ndarray], np.ndarray] | None = None,
    chunk: int = 50_000,
) -> ExactResult:
    """Minimize the routing cost (or ``objective``) over every integral assignment."""
    n, k = instance.n, instance.k
    total = k**n
    if total > cap:
        raise EnumerationCapError(f"enumeration needs k^n = {k}^{n} = {total} assignments (cap {cap})")
    objective = objective or (lambda H: eval_cost_batch(instance, H))
    best_val, best_h = np.inf, None
    for a in range(0, total, chunk):
        H = all_hub_maps(n, k, a, min(total, a + chunk))
        vals = np.asarray(objective(H), float)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_h = float(vals[j]), H[j]
    return ExactResult(Assignment.from_hubs(best_h, k), best_val, total)
