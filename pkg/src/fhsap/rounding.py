"""Geometric rounding of fractional assignments.

For a point ``x`` on the probability simplex, the simplex splits into ``k``
regions; region ``i`` is the polytope spanned by ``x`` and every unit vertex
except ``v_i``. A uniform point ``u`` lies in region ``i`` exactly when
``i = argmin_s u_s / x_s``: writing ``u = lam * x + sum_{s != i} mu_s v_s``
forces ``lam = u_i / x_i`` and ``mu_s = u_s - lam * x_s``, which is
nonnegative for all ``s`` iff ``u_i / x_i`` is the smallest ratio.

One ``u`` is shared by every terminal in a trial. Hubs with ``x_s < 1e-15``
are never selected; exact ratio ties go to the lowest hub index.

Randomness: ``gra_best_of`` seeds a PCG64 generator with ``seed`` and takes
trial ``t``'s point from the ``t``-th consecutive block of ``k``
standard-exponential draws, so trial ``t`` is reproducible on its own and
the result does not depend on how trials are batched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .formulations import CostBreakdown, eval_cost, eval_cost_batch
from .instance import Assignment, Instance, make_rng

__all__ = [
    "ZERO_SHARE",
    "RoundingOutcome",
    "check_simplex",
    "sample_simplex",
    "sample_simplex_batch",
    "classify_region",
    "classify_batch",
    "barycentric_weights",
    "gra_round",
    "gra_best_of",
    "simplex_distance",
]

ZERO_SHARE = 1e-15
SIMPLEX_TOL = 1e-12


def check_simplex(p, tol: float = SIMPLEX_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("simplex point must be a non-empty vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > tol:
        raise ValueError(f"not on the simplex: {p!r}")
    return p


def sample_simplex(k: int, rng: np.random.Generator) -> np.ndarray:
    """One uniform draw from the (k-1)-simplex (normalized exponentials)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    e = rng.standard_exponential(k)
    return e / e.sum()


def sample_simplex_batch(k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    e = rng.standard_exponential((size, k))
    return e / e.sum(axis=1, keepdims=True)


def _ratios(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    safe = np.where(x < ZERO_SHARE, 1.0, x)
    return np.where(x < ZERO_SHARE, np.inf, u / safe)


def classify_region(x, u) -> int:
    """Index ``i`` of the region of ``x``'s partition that contains ``u``."""
    return int(np.argmin(_ratios(np.asarray(x, float), np.asarray(u, float))))


def barycentric_weights(x, u, i: int) -> tuple[float, np.ndarray]:
    """``(lam, mu)`` with ``u = lam * x + sum_s mu_s v_s`` and ``mu_i = 0``."""
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    lam = u[i] / x[i]
    mu = u - lam * x
    mu[i] = 0.0
    return float(lam), mu


def classify_batch(X: np.ndarray, U: np.ndarray, chunk_elems: int = 2_000_000) -> np.ndarray:
    """Hub chosen for every (trial, row): ``X`` is (n, k), ``U`` is (T, k) -> (T, n)."""
    X = np.asarray(X, float)
    U = np.atleast_2d(np.asarray(U, float))
    n, k = X.shape
    safe = np.where(X < ZERO_SHARE, 1.0, X)
    dead = X < ZERO_SHARE
    out = np.empty((U.shape[0], n), dtype=np.intp)
    step = max(1, chunk_elems // max(1, n * k))
    for a in range(0, U.shape[0], step):
        R = U[a:a + step, None, :] / safe[None, :, :]
        R[:, dead] = np.inf
        out[a:a + step] = np.argmin(R, axis=2)
    return out


def gra_round(fractional: Assignment, u) -> Assignment:
    """Round every row with the same simplex point ``u``."""
    u = np.asarray(u, float)
    if u.shape != (fractional.k,):
        raise ValueError(f"u has shape {u.shape}, expected ({fractional.k},)")
    return Assignment.from_hubs(classify_batch(fractional.x, u[None, :])[0], fractional.k)


@dataclass(frozen=True)
class RoundingOutcome:
    assignment: Assignment
    cost: CostBreakdown
    trial: int
    u: np.ndarray
    criterion: float
    trial_values: np.ndarray  # selection criterion of every trial, in trial order


def gra_best_of(
    instance: Instance,
    fractional: Assignment,
    trials: int,
    seed: int,
    objective: Callable[[np.ndarray], np.ndarray] | None = None,
    batch: int = 1000,
) -> RoundingOutcome:
    """Round ``trials`` times and keep the cheapest result.

    ``objective`` maps an ``(m, n)`` array of hub maps to ``m`` criterion
    values; it defaults to the routing cost. Ties go to the earliest trial.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if fractional.x.shape != (instance.n, instance.k):
        raise ValueError("assignment does not match the instance")
    objective = objective or (lambda H: eval_cost_batch(instance, H))
    rng = make_rng(seed)
    k = instance.k
    values = np.empty(trials)
    best_val, best_t, best_h, best_u = np.inf, -1, None, None
    for a in range(0, trials, batch):
        m = min(batch, trials - a)
        U = sample_simplex_batch(k, m, rng)
        H = classify_batch(fractional.x, U)
        uniq, inv = np.unique(H, axis=0, return_inverse=True)
        vals = np.asarray(objective(uniq), float)[inv.ravel()]
        values[a:a + m] = vals
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_t, best_h, best_u = float(vals[j]), a + j, H[j].copy(), U[j].copy()
    chosen = Assignment.from_hubs(best_h, k)
    return RoundingOutcome(chosen, eval_cost(instance, chosen), best_t, best_u, best_val, values)


def simplex_distance(x, y) -> float:
    return float(np.abs(np.asarray(x, float) - np.asarray(y, float)).sum())
