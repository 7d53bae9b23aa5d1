"""Robust FHSAP under a weighted p-norm ball of demand matrices.

The admissible demands are ``{d : ||(d - u) / sigma||_p <= Q}`` taken
entrywise over all ``(i, j)`` pairs. For a fixed integral assignment with
per-unit route costs ``f``, the worst case is
``f.u + Q * ||sigma * f||_q`` with ``1/p + 1/q = 1``.

The convex counterpart needs equal off-diagonal hub costs ``c``. For integral
``x`` the inter-hub leg of route ``(i, j)`` equals ``(c/2) * sum_r |x_ir - x_jr|``
(the deviation sum is 2 when the two terminals sit on different hubs), and that
is the coefficient used on the deviation variables.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .instance import Assignment, Instance, InstanceError, make_rng
from .model import CONSTRAINT_TOL, ModelBuilder, OptModel, SolveOptions, Status, solve, violations
from .rounding import gra_best_of

__all__ = [
    "UncertaintySet",
    "RobustEval",
    "RobustIndex",
    "RobustSolution",
    "PremiseError",
    "dual_order",
    "f_vector",
    "f_vector_batch",
    "worst_case",
    "worst_case_cost",
    "worst_case_batch",
    "build_robust_socp",
    "integral_point",
    "robust_solve",
    "gaps",
    "generate_uncertainty_set",
]

INTEGRAL_TOL = 1e-6


class PremiseError(ValueError):
    """The instance or set does not meet the counterpart's assumptions."""


def dual_order(p: float) -> float:
    p = float(p)
    if not p >= 1:
        raise ValueError(f"norm order must be >= 1, got {p}")
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


@dataclass(frozen=True, eq=False)
class UncertaintySet:
    nominal: np.ndarray
    sigma: np.ndarray
    budget: float
    p: float = 2.0

    def __post_init__(self):
        nominal = np.array(self.nominal, float)
        sigma = np.array(self.sigma, float)
        if nominal.ndim != 2 or nominal.shape[0] != nominal.shape[1]:
            raise ValueError(f"nominal demand must be square, got {nominal.shape}")
        if sigma.shape != nominal.shape:
            raise ValueError(f"sigma shape {sigma.shape} does not match nominal {nominal.shape}")
        if not np.all(sigma > 0):
            raise ValueError("sigma must be strictly positive")
        if not self.budget >= 0:
            raise ValueError("budget must be >= 0")
        dual_order(self.p)
        for a in (nominal, sigma):
            a.setflags(write=False)
        object.__setattr__(self, "nominal", nominal)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "budget", float(self.budget))
        object.__setattr__(self, "p", float(self.p))

    @property
    def n(self) -> int:
        return self.nominal.shape[0]

    def with_budget(self, budget: float) -> "UncertaintySet":
        return UncertaintySet(self.nominal, self.sigma, budget, self.p)

    def contains(self, d, tol: float = 1e-6) -> bool:
        z = (np.asarray(d, float) - self.nominal) / self.sigma
        return _norm(z.ravel(), self.p) <= self.budget + tol

    def to_json(self) -> str:
        return json.dumps({
            "nominal": self.nominal.tolist(),
            "sigma": self.sigma.tolist(),
            "budget": self.budget,
            "p": "inf" if math.isinf(self.p) else self.p,
        })

    @classmethod
    def from_json(cls, text: str) -> "UncertaintySet":
        doc = json.loads(text)
        for f in ("nominal", "sigma", "budget", "p"):
            if f not in doc:
                raise ValueError(f"uncertainty set document missing field {f!r}")
        p = math.inf if doc["p"] in ("inf", "Infinity") else float(doc["p"])
        return cls(doc["nominal"], doc["sigma"], float(doc["budget"]), p)

    @classmethod
    def load(cls, path) -> "UncertaintySet":
        return cls.from_json(Path(path).read_text())


def _norm(v: np.ndarray, order: float) -> float:
    v = np.abs(v)
    if v.size == 0:
        return 0.0
    if math.isinf(order):
        return float(v.max())
    if order == 1:
        return float(v.sum())
    scale = v.max()
    if scale == 0:
        return 0.0
    return float(scale * np.sum((v / scale) ** order) ** (1.0 / order))


@dataclass(frozen=True)
class RobustEval:
    nominal: float
    worst: float
    demand: np.ndarray


def _hub_map(instance: Instance, assignment: Assignment) -> np.ndarray:
    if not assignment.integral:
        raise InstanceError("an integral assignment is required")
    if assignment.x.shape != (instance.n, instance.k):
        raise InstanceError("assignment does not match the instance")
    return assignment.hubs


def f_vector(instance: Instance, assignment: Assignment) -> np.ndarray:
    """Per-unit cost of sending one unit from ``i`` to ``j`` under the assignment."""
    return f_vector_batch(instance, _hub_map(instance, assignment)[None, :])[0]


def f_vector_batch(instance: Instance, hubs: np.ndarray) -> np.ndarray:
    hubs = np.asarray(hubs, dtype=np.intp)
    rows = np.arange(instance.n)
    up = instance.cost_out[rows, hubs]  # (m, n)
    down = instance.cost_in[rows, hubs]
    return up[:, :, None] + down[:, None, :] + instance.cost_hub[hubs[:, :, None], hubs[:, None, :]]


def worst_case(f: np.ndarray, uset: UncertaintySet) -> RobustEval:
    """Closed-form inner maximization of ``f . d`` over the uncertainty set."""
    f = np.asarray(f, float)
    if f.shape != uset.nominal.shape:
        raise ValueError(f"f shape {f.shape} does not match the set {uset.nominal.shape}")
    p, Q = uset.p, uset.budget
    q = dual_order(p)
    g = (uset.sigma * f).ravel()
    nominal = float(np.sum(f * uset.nominal))
    worst = nominal + Q * _norm(g, q)
    z = np.zeros_like(g)
    scale = np.abs(g).max() if g.size else 0.0
    if Q > 0 and scale > 0:
        if p == 1:
            z[int(np.argmax(np.abs(g)))] = np.sign(g[int(np.argmax(np.abs(g)))])
        elif math.isinf(p):
            z = np.sign(g)
        else:
            gn = g / scale
            w = np.abs(gn) ** (q - 1.0)
            z = np.sign(g) * w / _norm(gn, q) ** (q - 1.0)
    d_star = uset.nominal + Q * uset.sigma * z.reshape(f.shape)
    return RobustEval(nominal, worst, d_star)


def worst_case_cost(instance: Instance, assignment: Assignment, uset: UncertaintySet) -> RobustEval:
    if uset.n != instance.n:
        raise ValueError("uncertainty set size does not match the instance")
    return worst_case(f_vector(instance, assignment), uset)


def worst_case_batch(instance: Instance, uset: UncertaintySet, hubs: np.ndarray,
                     chunk_elems: int = 4_000_000) -> np.ndarray:
    """Worst-case cost for each row of an ``(m, n)`` array of hub maps."""
    hubs = np.asarray(hubs, dtype=np.intp)
    m, n = hubs.shape
    q = dual_order(uset.p)
    out = np.empty(m)
    step = max(1, chunk_elems // max(1, n * n))
    for a in range(0, m, step):
        F = f_vector_batch(instance, hubs[a:a + step])
        G = np.abs(F * uset.sigma).reshape(F.shape[0], -1)
        if math.isinf(q):
            norms = G.max(axis=1)
        elif q == 1:
            norms = G.sum(axis=1)
        else:
            sc = G.max(axis=1)
            sc_safe = np.where(sc > 0, sc, 1.0)
            norms = sc * np.sum((G / sc_safe[:, None]) ** q, axis=1) ** (1.0 / q)
        out[a:a + step] = np.einsum("mij,ij->m", F, uset.nominal) + uset.budget * norms
    return out


@dataclass(frozen=True)
class RobustIndex:
    x: np.ndarray
    Z: np.ndarray
    t: int
    w: np.ndarray


def _common_hub_cost(instance: Instance) -> float:
    if instance.k == 1:
        return 0.0
    c = instance.uniform_hub_cost
    if c is None:
        raise PremiseError("the robust counterpart requires all inter-hub costs to be equal")
    return c


def build_robust_socp(instance: Instance, uset: UncertaintySet) -> tuple[OptModel, RobustIndex]:
    """Second-order cone relaxation of the robust problem (p = 2 only)."""
    if uset.p != 2:
        raise PremiseError(f"only p = 2 has a cone model; got p = {uset.p}")
    if uset.n != instance.n:
        raise ValueError("uncertainty set size does not match the instance")
    c = _common_hub_cost(instance)
    n, k = instance.n, instance.k
    b = ModelBuilder()
    x = b.add_vars("x", (n, k), 0.0, 1.0)
    Z = b.add_vars("Z", (n, n), -np.inf, np.inf)
    t = int(b.add_vars("t", (), 0.0, np.inf))
    w = b.add_vars("w", (n, n, k), 0.0, np.inf)
    b.add_rows(np.repeat(np.arange(n), k), x.ravel(), 1.0, "=", np.ones(n))

    ii, jj, rr = np.meshgrid(np.arange(n), np.arange(n), np.arange(k), indexing="ij")
    m = n * n * k
    r = np.arange(m)
    xi, xj = x[ii, rr].ravel(), x[jj, rr].ravel()
    for a, bb in ((xi, xj), (xj, xi)):
        # x_a - x_b - w <= 0
        b.add_rows(np.concatenate([r, r, r]), np.concatenate([a, bb, w.ravel()]),
                   np.concatenate([np.ones(m), -np.ones(m), -np.ones(m)]), "<=", np.zeros(m))

    # Z_ij - sum_s cout[i,s] x_is - sum_t cin[j,t] x_jt - (c/2) sum_r w_ijr >= 0, row i*n+j
    pair = (ii * n + jj)  # (n, n, k)
    rows = np.concatenate([np.arange(n * n), pair.ravel(), pair.ravel(), pair.ravel()])
    cols = np.concatenate([Z.ravel(), xi, xj, w.ravel()])
    vals = np.concatenate([
        np.ones(n * n),
        -instance.cost_out[ii, rr].ravel(),
        -instance.cost_in[jj, rr].ravel(),
        np.full(m, -0.5 * c),
    ])
    b.add_rows(rows, cols, vals, ">=", np.zeros(n * n))

    b.add_soc(t, np.arange(n * n), Z.ravel(), uset.sigma.ravel(), dim=n * n)
    b.add_objective(Z, uset.nominal)
    b.add_objective(t, uset.budget)
    return b.build(), RobustIndex(x, Z, t, w)


def integral_point(model: OptModel, index: RobustIndex, instance: Instance, uset: UncertaintySet,
                   hubs: np.ndarray) -> np.ndarray:
    """Full variable vector of the cone model at an integral assignment."""
    a = Assignment.from_hubs(hubs, instance.k)
    v = np.zeros(model.num_vars)
    v[index.x] = a.x
    Z = f_vector(instance, a)
    v[index.Z] = Z
    v[index.w] = np.abs(a.x[:, None, :] - a.x[None, :, :])
    v[index.t] = np.linalg.norm(uset.sigma * Z)
    return v


@dataclass(frozen=True)
class RobustSolution:
    assignment: Assignment
    evaluation: RobustEval
    relaxation_value: float
    rounded: bool
    solve_time: float
    total_time: float


def robust_solve(instance: Instance, uset: UncertaintySet, trials: int = 5000, seed: int = 0,
                 opts: SolveOptions | None = None) -> RobustSolution:
    """Solve the cone relaxation; round by worst-case cost when x is fractional."""
    t0 = time.perf_counter()
    model, index = build_robust_socp(instance, uset)
    res = solve(model, opts)
    if res.status is not Status.OPTIMAL:
        raise RuntimeError(f"robust relaxation ended with status {res.status.value}: {res.message}")
    x = np.clip(res.value(index.x), 0.0, 1.0)
    rounded = False
    value = res.objective
    if np.all(np.minimum(x, 1.0 - x) <= INTEGRAL_TOL):
        hubs = np.argmax(x, axis=1)
        chosen = Assignment.from_hubs(hubs, instance.k)
        # Interior-point stops ~1e-9 (relative) short of the vertex; the exact
        # integral point is feasible, so keep its value when it is no worse.
        v = integral_point(model, index, instance, uset, hubs)
        if max(violations(model, v)) <= CONSTRAINT_TOL:
            value = min(value, float(model.c @ v + model.offset))
    else:
        frac = Assignment(x / x.sum(axis=1, keepdims=True))
        outcome = gra_best_of(instance, frac, trials, seed,
                              objective=lambda H: worst_case_batch(instance, uset, H))
        chosen, rounded = outcome.assignment, True
    ev = worst_case_cost(instance, chosen, uset)
    return RobustSolution(chosen, ev, value, rounded, res.time, time.perf_counter() - t0)


def gaps(instance: Instance, uset: UncertaintySet, nominal_choice: Assignment,
         robust_choice: Assignment) -> tuple[float, float]:
    """Percentage regrets ``(Gap1, Gap2)`` of the robust and nominal choices."""
    nom = worst_case_cost(instance, nominal_choice, uset)
    rob = worst_case_cost(instance, robust_choice, uset)
    if nom.nominal == 0 or rob.worst == 0:
        raise ZeroDivisionError("gap undefined: zero reference cost")
    gap1 = (rob.nominal - nom.nominal) / nom.nominal * 100.0
    gap2 = (nom.worst - rob.worst) / rob.worst * 100.0
    return gap1, gap2


def generate_uncertainty_set(instance: Instance, budget: float, seed: int, p: float = 2.0) -> UncertaintySet:
    """Nominal demand from the instance; weights 100 * standard lognormal."""
    sigma = 100.0 * make_rng(seed).lognormal(0.0, 1.0, (instance.n, instance.n))
    return UncertaintySet(instance.demand, sigma, budget, p)
