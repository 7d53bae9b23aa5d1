"""FHSAP cost evaluation and the four LP/MILP formulations.

Variable families (0-based indices throughout):

``x[i, s]``
    share of terminal ``i`` assigned to hub ``s``.
``X[i, j, s, t]``
    share of the ``i -> j`` demand routed through hubs ``s`` then ``t``
    (route-share linearization, "lp1").
``Y[i, s, t]``, ``s != t``
    flow originating at ``i`` carried from hub ``s`` to hub ``t``
    (flow formulation, "lp2" and the strengthened variants).
``y[i, j, s]``
    upper bound on ``|x[i, s] - x[j, s]|`` (strengthened variants "lp2p" and
    "lp3"). The ``i == j`` entries are kept; they sit at zero.

The flow formulations use the origin/destination totals ``O = demand.sum(1)``
and ``D = demand.sum(0)``, with the linear coefficient of ``x[i, s]`` being
``cost_out[i, s] * O[i] + cost_in[i, s] * D[i]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .instance import Assignment, Instance, InstanceError, totals
from .model import ModelBuilder, OptModel, SolveOptions, SolveResult, Status, solve

__all__ = [
    "CostBreakdown",
    "IndexMap",
    "Lp1Solution",
    "FlowSolution",
    "SizeGuardError",
    "LP1_VARIABLE_CAP",
    "eval_cost",
    "eval_cost_fractional",
    "eval_cost_batch",
    "build_milp1",
    "build_milp2",
    "build_milp2prime",
    "build_milp3",
    "BUILDERS",
    "solve_relaxation",
    "extract_assignment",
    "lp1_solution",
    "flow_solution",
    "induced_flows",
    "milp2_objective",
    "flow_balance_residual",
    "lemma1_residual",
    "chekuri_check",
]

LP1_VARIABLE_CAP = 2_000_000
ROW_TOL = 1e-6
SNAP_TOL = 1e-9


class SizeGuardError(RuntimeError):
    """A formulation would exceed its configured size cap."""


@dataclass(frozen=True)
class CostBreakdown:
    linear: float
    quadratic: float

    @property
    def total(self) -> float:
        return self.linear + self.quadratic


def _require_integral(assignment: Assignment) -> np.ndarray:
    if not assignment.integral:
        raise InstanceError("an integral assignment is required")
    return assignment.hubs


def _check_shape(instance: Instance, assignment: Assignment) -> None:
    if assignment.x.shape != (instance.n, instance.k):
        raise InstanceError(
            f"assignment shape {assignment.x.shape} does not match instance ({instance.n}, {instance.k})"
        )


def eval_cost(instance: Instance, assignment: Assignment) -> CostBreakdown:
    """Exact routing cost of an integral assignment."""
    _check_shape(instance, assignment)
    h = _require_integral(assignment)
    O, D = totals(instance)
    rows = np.arange(instance.n)
    linear = float(O @ instance.cost_out[rows, h] + D @ instance.cost_in[rows, h])
    quadratic = float(np.sum(instance.demand * instance.cost_hub[np.ix_(h, h)]))
    return CostBreakdown(linear, quadratic)


def eval_cost_fractional(instance: Instance, assignment: Assignment) -> CostBreakdown:
    """The same linear + bilinear objective evaluated at a fractional x."""
    _check_shape(instance, assignment)
    x = assignment.x
    O, D = totals(instance)
    linear = float(O @ np.sum(instance.cost_out * x, axis=1) + D @ np.sum(instance.cost_in * x, axis=1))
    quadratic = float(np.sum(instance.demand * (x @ instance.cost_hub @ x.T)))
    return CostBreakdown(linear, quadratic)


def eval_cost_batch(instance: Instance, hubs: np.ndarray, chunk_elems: int = 4_000_000) -> np.ndarray:
    """Total cost for each row of an ``(m, n)`` array of hub maps."""
    hubs = np.asarray(hubs, dtype=np.intp)
    m, n = hubs.shape
    O, D = totals(instance)
    lin_coef = instance.cost_out * O[:, None] + instance.cost_in * D[:, None]
    rows = np.arange(n)
    out = lin_coef[rows, hubs].sum(axis=1)
    step = max(1, chunk_elems // max(1, n * n))
    C, d = instance.cost_hub, instance.demand
    for a in range(0, m, step):
        H = hubs[a:a + step]
        out[a:a + step] += np.einsum("mij,ij->m", C[H[:, :, None], H[:, None, :]], d)
    return out


@dataclass(frozen=True)
class IndexMap:
    """Variable indices of a built formulation; ``-1`` marks absent entries."""

    kind: str
    x: np.ndarray
    X: np.ndarray | None = None
    Y: np.ndarray | None = None
    y: np.ndarray | None = None

    def to_json(self) -> str:
        doc = {"kind": self.kind}
        for name in ("x", "X", "Y", "y"):
            arr = getattr(self, name)
            if arr is not None:
                doc[name] = arr.tolist()
        doc["notes"] = "Y[i][s][s] = -1 (no variable); y includes i == j entries"
        return json.dumps(doc)


@dataclass(frozen=True)
class Lp1Solution:
    x: np.ndarray
    X: np.ndarray


@dataclass(frozen=True)
class FlowSolution:
    x: np.ndarray
    Y: np.ndarray
    y: np.ndarray | None = None


def _assignment_vars(b: ModelBuilder, n: int, k: int, relax: bool) -> np.ndarray:
    x = b.add_vars("x", (n, k), 0.0, 1.0, integer=not relax)
    b.add_rows(np.repeat(np.arange(n), k), x.ravel(), 1.0, "=", np.ones(n))
    return x


def build_milp1(instance: Instance, relax: bool = True, cap: int = LP1_VARIABLE_CAP):
    """Route-share linearization. Returns ``(OptModel, IndexMap)``."""
    n, k = instance.n, instance.k
    if n * n * k * k > cap:
        raise SizeGuardError(
            f"LP1 needs n^2 k^2 = {n * n * k * k} route variables (cap {cap}); use LP2/LP3 instead"
        )
    b = ModelBuilder()
    x = _assignment_vars(b, n, k, relax)
    X = b.add_vars("X", (n, n, k, k), 0.0, np.inf)
    d, C = instance.demand, instance.cost_hub
    coef = (
        instance.cost_out[:, None, :, None]
        + C[None, None, :, :]
        + instance.cost_in[None, :, None, :]
    ) * d[:, :, None, None]
    b.add_objective(X, coef)

    pair = np.arange(n * n).reshape(n, n)
    # sum_{s,t} X[i,j,s,t] = 1
    b.add_rows(np.repeat(pair.ravel(), k * k), X.ravel(), 1.0, "=", np.ones(n * n))
    # sum_t X[i,j,s,t] - x[i,s] = 0
    r = np.arange(n * n * k).reshape(n, n, k)
    rows = np.concatenate([np.broadcast_to(r[..., None], X.shape).ravel(), r.ravel()])
    cols = np.concatenate([X.ravel(), np.broadcast_to(x[:, None, :], (n, n, k)).ravel()])
    vals = np.concatenate([np.ones(X.size), -np.ones(n * n * k)])
    b.add_rows(rows, cols, vals, "=", np.zeros(n * n * k))
    # sum_s X[i,j,s,t] - x[j,t] = 0
    rows = np.concatenate([np.broadcast_to(r[:, :, None, :], X.shape).ravel(), r.ravel()])
    cols = np.concatenate([X.ravel(), np.broadcast_to(x[None, :, :], (n, n, k)).ravel()])
    b.add_rows(rows, cols, vals, "=", np.zeros(n * n * k))
    return b.build(), IndexMap("lp1", x, X=X)


def _flow_core(b: ModelBuilder, instance: Instance, relax: bool):
    """Assignment rows, flow variables, objective and the flow-balance rows."""
    n, k = instance.n, instance.k
    x = _assignment_vars(b, n, k, relax)
    S, T = np.nonzero(~np.eye(k, dtype=bool))
    Yv = b.add_vars("Y", (n, S.size), 0.0, np.inf)
    Y = -np.ones((n, k, k), dtype=np.int64)
    Y[:, S, T] = Yv

    O, D = totals(instance)
    b.add_objective(x, instance.cost_out * O[:, None] + instance.cost_in * D[:, None])
    b.add_objective(Yv, np.broadcast_to(instance.cost_hub[S, T], Yv.shape))

    # sum_{t!=s} Y[i,s,t] - sum_{t!=s} Y[i,t,s] - O_i x[i,s] + sum_j d_ij x[j,s] = 0, row i*k+s
    I = np.arange(n)[:, None]
    row_out = I * k + S[None, :]
    row_in = I * k + T[None, :]
    ii, jj, ss = np.meshgrid(np.arange(n), np.arange(n), np.arange(k), indexing="ij")
    rows = np.concatenate([row_out.ravel(), row_in.ravel(), (I * k + np.arange(k)).ravel(),
                           (ii * k + ss).ravel()])
    cols = np.concatenate([Yv.ravel(), Yv.ravel(), x.ravel(), x[jj, ss].ravel()])
    vals = np.concatenate([np.ones(Yv.size), -np.ones(Yv.size), -np.repeat(O, k),
                           instance.demand[ii, jj].ravel()])
    b.add_rows(rows, cols, vals, "=", np.zeros(n * k))
    return x, Y, Yv, S, T


def _deviation_vars(b: ModelBuilder, x: np.ndarray, n: int, k: int) -> np.ndarray:
    y = b.add_vars("y", (n, n, k), 0.0, np.inf)
    ii, jj, ss = np.meshgrid(np.arange(n), np.arange(n), np.arange(k), indexing="ij")
    m = n * n * k
    r = np.arange(m)
    rows = np.concatenate([r, r, r])
    xi, xj = x[ii, ss].ravel(), x[jj, ss].ravel()
    # x_is - x_js - y_ijs <= 0  and  x_js - x_is - y_ijs <= 0
    b.add_rows(rows, np.concatenate([xi, xj, y.ravel()]),
               np.concatenate([np.ones(m), -np.ones(m), -np.ones(m)]), "<=", np.zeros(m))
    b.add_rows(rows, np.concatenate([xj, xi, y.ravel()]),
               np.concatenate([np.ones(m), -np.ones(m), -np.ones(m)]), "<=", np.zeros(m))
    return y


def build_milp2(instance: Instance, relax: bool = True):
    """Flow formulation. Returns ``(OptModel, IndexMap)``."""
    b = ModelBuilder()
    x, Y, *_ = _flow_core(b, instance, relax)
    return b.build(), IndexMap("lp2", x, Y=Y)


def build_milp2prime(instance: Instance, relax: bool = True):
    """Flow formulation plus one validity equality per (terminal, hub)."""
    n, k = instance.n, instance.k
    b = ModelBuilder()
    x, Y, Yv, S, T = _flow_core(b, instance, relax)
    y = _deviation_vars(b, x, n, k)
    # sum_{t!=s} Y[i,s,t] + sum_{t!=s} Y[i,t,s] - sum_j d_ij y[i,j,s] = 0, row i*k+s
    I = np.arange(n)[:, None]
    ii, jj, ss = np.meshgrid(np.arange(n), np.arange(n), np.arange(k), indexing="ij")
    rows = np.concatenate([(I * k + S).ravel(), (I * k + T).ravel(), (ii * k + ss).ravel()])
    cols = np.concatenate([Yv.ravel(), Yv.ravel(), y.ravel()])
    vals = np.concatenate([np.ones(2 * Yv.size), -instance.demand[ii, jj].ravel()])
    b.add_rows(rows, cols, vals, "=", np.zeros(n * k))
    return b.build(), IndexMap("lp2p", x, Y=Y, y=y)


def build_milp3(instance: Instance, relax: bool = True):
    """Flow formulation plus the single aggregated validity equality."""
    n, k = instance.n, instance.k
    b = ModelBuilder()
    x, Y, Yv, S, T = _flow_core(b, instance, relax)
    y = _deviation_vars(b, x, n, k)
    # 2 sum_{i, s!=t} Y[i,s,t] - sum_{i,j,s} d_ij y[i,j,s] = 0
    dcoef = np.broadcast_to(instance.demand[:, :, None], y.shape).ravel()
    b.add_row(np.concatenate([Yv.ravel(), y.ravel()]),
              np.concatenate([np.full(Yv.size, 2.0), -dcoef]), "=", 0.0)
    return b.build(), IndexMap("lp3", x, Y=Y, y=y)


BUILDERS: dict[str, Callable] = {
    "lp1": build_milp1,
    "lp2": build_milp2,
    "lp2p": build_milp2prime,
    "lp3": build_milp3,
}


def solve_relaxation(instance: Instance, kind: str, opts: SolveOptions | None = None,
                     **build_kw) -> tuple[SolveResult, IndexMap]:
    """Build and solve the LP relaxation named ``kind`` (lp1, lp2, lp2p, lp3)."""
    try:
        builder = BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown relaxation {kind!r}; choose from {sorted(BUILDERS)}") from None
    model, index = builder(instance, relax=True, **build_kw)
    return solve(model, opts), index


def extract_assignment(result: SolveResult, index: IndexMap) -> Assignment:
    """Recover the assignment matrix, renormalizing rows off by at most 1e-6."""
    if result.status is not Status.OPTIMAL:
        raise ValueError(f"cannot extract an assignment from a {result.status.value} result")
    x = np.clip(result.value(index.x), 0.0, 1.0)
    sums = x.sum(axis=1)
    dev = np.abs(sums - 1.0)
    if np.any(dev > ROW_TOL):
        i = int(np.argmax(dev))
        raise ValueError(f"row {i} of the assignment sums to {sums[i]!r}")
    near = np.minimum(x, 1.0 - x) <= SNAP_TOL
    if near.all():
        return Assignment(np.round(x), integral=True)
    return Assignment(x / sums[:, None], integral=False)


def lp1_solution(result: SolveResult, index: IndexMap) -> Lp1Solution:
    if index.X is None:
        raise ValueError("not an LP1 index map")
    return Lp1Solution(result.value(index.x), result.value(index.X))


def flow_solution(result: SolveResult, index: IndexMap) -> FlowSolution:
    if index.Y is None:
        raise ValueError("not a flow-formulation index map")
    Y = np.where(index.Y >= 0, result.value(np.maximum(index.Y, 0)), 0.0)
    y = result.value(index.y) if index.y is not None else None
    return FlowSolution(result.value(index.x), Y, y)


def induced_flows(instance: Instance, assignment: Assignment) -> FlowSolution:
    """Hub-to-hub flows produced by routing all demand under an integral assignment."""
    _check_shape(instance, assignment)
    _require_integral(assignment)
    x = assignment.x
    # Y[i,s,t] = sum_j d_ij x_is x_jt
    Y = x[:, :, None] * (instance.demand @ x)[:, None, :]
    idx = np.arange(instance.k)
    Y[:, idx, idx] = 0.0
    return FlowSolution(x.copy(), Y)


def milp2_objective(instance: Instance, x: np.ndarray, Y: np.ndarray) -> float:
    O, D = totals(instance)
    lin = np.sum((instance.cost_out * O[:, None] + instance.cost_in * D[:, None]) * x)
    off = ~np.eye(instance.k, dtype=bool)
    return float(lin + np.sum(Y[:, off] * instance.cost_hub[off]))


def _off_diag_sums(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = Y.shape[1]
    Z = Y.copy()
    idx = np.arange(k)
    Z[:, idx, idx] = 0.0
    return Z.sum(axis=2), Z.sum(axis=1)  # outflow[i,s], inflow[i,s]


def flow_balance_residual(instance: Instance, flow: FlowSolution) -> float:
    """Largest absolute flow-balance violation over (terminal, hub)."""
    O, _ = totals(instance)
    out, inn = _off_diag_sums(flow.Y)
    rhs = O[:, None] * flow.x - instance.demand @ flow.x
    return float(np.max(np.abs(out - inn - rhs)))


def lemma1_residual(instance: Instance, flow: FlowSolution) -> float:
    """Max over (i, s) of |out + in - sum_j d_ij |x_is - x_js||."""
    x = flow.x
    if not np.all((x == 0.0) | (x == 1.0)):
        raise InstanceError("the validity identity is only defined for integral x")
    out, inn = _off_diag_sums(flow.Y)
    dev = np.einsum("ij,ijs->is", instance.demand, np.abs(x[:, None, :] - x[None, :, :]))
    return float(np.max(np.abs(out + inn - dev)))


def chekuri_check(sol: Lp1Solution) -> float:
    """Max over (i, j) of sum_s |x_is - x_js| - sum_s sum_{t!=s} (X_ijst + X_ijts)."""
    x, X = sol.x, sol.X
    lhs = np.abs(x[:, None, :] - x[None, :, :]).sum(axis=2)
    diag = np.trace(X, axis1=2, axis2=3)
    rhs = 2.0 * (X.sum(axis=(2, 3)) - diag)
    return float(np.max(lhs - rhs))
