"""Small optimization IR (LP + second-order cones + integrality) and its solver.

Every relaxation in the package is built as an :class:`OptModel` through a
:class:`ModelBuilder`. :func:`solve` dispatches on the model content:

* purely linear, continuous  -> HiGHS through ``scipy.optimize.linprog``
* linear with integer vars   -> HiGHS branch-and-bound through ``scipy.optimize.milp``
* any second-order cone      -> Clarabel interior point

All models are minimizations. A cone constraint ``(t, G, h)`` means
``x[t] >= ||G @ x + h||_2``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

__all__ = [
    "Status",
    "Relation",
    "SocConstraint",
    "OptModel",
    "ModelBuilder",
    "SolveOptions",
    "SolveResult",
    "CapabilityError",
    "ModelError",
    "solve",
    "violations",
    "write_lp",
]

CONSTRAINT_TOL = 1e-6
BOUND_TOL = 1e-9


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    LIMIT = "Limit"
    ERROR = "Error"


class Relation(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


LE, EQ, GE = Relation.LE.value, Relation.EQ.value, Relation.GE.value


class ModelError(ValueError):
    pass


class CapabilityError(RuntimeError):
    """The requested model class cannot be solved with the given options."""


@dataclass(frozen=True)
class SocConstraint:
    t: int
    G: sp.csr_matrix
    h: np.ndarray


@dataclass(frozen=True)
class VarBlock:
    name: str
    start: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True, eq=False)
class OptModel:
    blocks: tuple[VarBlock, ...]
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    c: np.ndarray
    offset: float
    A: sp.csr_matrix
    relation: np.ndarray  # '<=', '=' or '>=' per row
    rhs: np.ndarray
    soc: tuple[SocConstraint, ...] = ()

    def __post_init__(self):
        nv = self.num_vars
        for name in ("lb", "ub", "integer", "c"):
            if getattr(self, name).shape != (nv,):
                raise ModelError(f"{name} must have length {nv}")
        if self.A.shape[1] != nv:
            raise ModelError(f"constraint matrix has {self.A.shape[1]} columns, expected {nv}")
        if self.rhs.shape != (self.A.shape[0],) or self.relation.shape != (self.A.shape[0],):
            raise ModelError("rhs/relation length must equal the number of constraint rows")
        bad = np.flatnonzero(self.lb > self.ub)
        if bad.size:
            raise ModelError(f"variable {self.var_name(int(bad[0]))} has lb > ub")
        for cone in self.soc:
            if not 0 <= cone.t < nv or cone.G.shape[1] != nv:
                raise ModelError("cone constraint references a variable out of range")

    @property
    def num_vars(self) -> int:
        return self.lb.shape[0]

    @property
    def num_constraints(self) -> int:
        return self.A.shape[0] + len(self.soc)

    @property
    def has_integers(self) -> bool:
        return bool(self.integer.any())

    def var_name(self, j: int) -> str:
        for b in self.blocks:
            if b.start <= j < b.start + b.size:
                idx = np.unravel_index(j - b.start, b.shape)
                return f"{b.name}({','.join(str(int(i)) for i in idx)})" if b.shape else b.name
        raise IndexError(j)

    @property
    def variables(self) -> list[tuple[str, float, float, bool]]:
        """(name, lower, upper, is_integer) per variable, in index order."""
        return [
            (self.var_name(j), float(self.lb[j]), float(self.ub[j]), bool(self.integer[j]))
            for j in range(self.num_vars)
        ]

    def relaxed(self) -> "OptModel":
        """Same model with every integrality flag dropped."""
        return OptModel(self.blocks, self.lb, self.ub, np.zeros_like(self.integer), self.c,
                        self.offset, self.A, self.relation, self.rhs, self.soc)


class ModelBuilder:
    """Accumulates variables, rows and cones, then freezes them into an OptModel."""

    def __init__(self):
        self._blocks: list[VarBlock] = []
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._int: list[np.ndarray] = []
        self._nv = 0
        self._c_parts: list[tuple[np.ndarray, np.ndarray]] = []
        self.offset = 0.0
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._rel: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self._nr = 0
        self._soc: list[tuple[int, np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]] = []

    @property
    def num_vars(self) -> int:
        return self._nv

    def add_vars(self, name: str, shape=(), lb=0.0, ub=np.inf, integer=False) -> np.ndarray:
        """Add a block of variables; returns their indices shaped like ``shape``."""
        shape = tuple(int(s) for s in np.atleast_1d(shape)) if shape != () else ()
        size = math.prod(shape)
        idx = np.arange(self._nv, self._nv + size).reshape(shape)
        self._blocks.append(VarBlock(name, self._nv, shape))
        self._lb.append(np.broadcast_to(np.asarray(lb, float), shape).ravel().copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, float), shape).ravel().copy())
        self._int.append(np.full(size, bool(integer)))
        self._nv += size
        return idx

    def add_objective(self, idx, coef) -> None:
        idx = np.asarray(idx)
        coef = np.broadcast_to(np.asarray(coef, float), idx.shape).ravel()
        self._c_parts.append((idx.ravel(), coef.copy()))

    def add_rows(self, rows, cols, vals, relation: Relation | str, rhs) -> np.ndarray:
        """Add a block of linear rows given in coordinate form.

        ``rows`` are block-local row numbers ``0..m-1`` with ``m = len(rhs)``;
        duplicate (row, col) pairs are summed. Returns the global row indices.
        """
        rhs = np.atleast_1d(np.asarray(rhs, float))
        m = rhs.shape[0]
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(vals, float), rows.shape).ravel()
        if rows.size and (rows.min() < 0 or rows.max() >= m):
            raise ModelError("row number outside the block")
        if cols.size and (cols.min() < 0 or cols.max() >= self._nv):
            raise ModelError("column index out of range")
        self._rows.append(rows + self._nr)
        self._cols.append(cols)
        self._vals.append(vals.copy())
        self._rel.append(np.full(m, Relation(relation).value, dtype="<U2"))
        self._rhs.append(rhs)
        out = np.arange(self._nr, self._nr + m)
        self._nr += m
        return out

    def add_row(self, cols, vals, relation, rhs) -> int:
        cols = np.asarray(cols).ravel()
        return int(self.add_rows(np.zeros(cols.size, dtype=np.int64), cols, vals, relation, [rhs])[0])

    def add_soc(self, t: int, rows, cols, vals, h=None, dim: int | None = None) -> None:
        """Add ``x[t] >= ||v||_2`` with ``v[r] = sum vals*x[cols] over rows==r, + h[r]``."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(vals, float), rows.shape).ravel().copy()
        h = None if h is None else np.asarray(h, float).ravel()
        if dim is None:
            dim = max(int(rows.max()) + 1 if rows.size else 0, 0 if h is None else h.size)
        h = np.zeros(dim) if h is None else h
        if h.size != dim or (rows.size and rows.max() >= dim):
            raise ModelError(f"cone argument has dimension {dim} but h has {h.size} entries")
        self._soc.append((int(t), rows, cols, vals, h, dim))

    def build(self) -> OptModel:
        nv = self._nv
        c = np.zeros(nv)
        for idx, coef in self._c_parts:
            np.add.at(c, idx, coef)
        cat = lambda parts, dt=float: np.concatenate(parts) if parts else np.zeros(0, dt)  # noqa: E731
        A = sp.csr_matrix(
            (cat(self._vals), (cat(self._rows, np.int64), cat(self._cols, np.int64))),
            shape=(self._nr, nv),
        )
        A.sum_duplicates()
        A.eliminate_zeros()
        rel = np.concatenate(self._rel) if self._rel else np.zeros(0, dtype="<U2")
        soc = tuple(
            SocConstraint(t, sp.csr_matrix((v, (r, cc)), shape=(dim, nv)), h)
            for t, r, cc, v, h, dim in self._soc
        )
        return OptModel(
            blocks=tuple(self._blocks),
            lb=cat(self._lb),
            ub=cat(self._ub),
            integer=cat(self._int, bool),
            c=c,
            offset=float(self.offset),
            A=A,
            relation=rel,
            rhs=cat(self._rhs),
            soc=soc,
        )


@dataclass
class SolveOptions:
    time_limit: float | None = None
    allow_integer: bool = True
    # Passed to HiGHS; tighter than the checked 1e-6 so large right-hand sides stay inside it.
    primal_feasibility_tol: float = 1e-9
    dual_feasibility_tol: float = 1e-9
    lp_method: str = "highs"
    conic_tol: float = 1e-10
    conic_max_iter: int = 500


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray | None
    objective: float | None
    time: float
    message: str = ""
    max_linear_violation: float = field(default=np.nan)
    max_soc_violation: float = field(default=np.nan)
    max_bound_violation: float = field(default=np.nan)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def value(self, idx) -> np.ndarray:
        if self.x is None:
            raise ModelError(f"no primal values (status {self.status.value})")
        return self.x[np.asarray(idx)]


def violations(model: OptModel, x: np.ndarray) -> tuple[float, float, float]:
    """Max absolute violation of (linear rows, cones, bounds) at ``x``."""
    lin = 0.0
    if model.A.shape[0]:
        ax = model.A @ x
        r = ax - model.rhs
        rel = model.relation
        viol = np.where(rel == LE, np.maximum(r, 0.0), np.where(rel == GE, np.maximum(-r, 0.0), np.abs(r)))
        lin = float(viol.max())
    soc = 0.0
    for cone in model.soc:
        v = cone.G @ x + cone.h
        soc = max(soc, float(np.linalg.norm(v) - x[cone.t]))
    bnd = float(max(np.max(model.lb - x, initial=0.0), np.max(x - model.ub, initial=0.0)))
    return lin, soc, bnd


def _split_linear(model: OptModel):
    A, rel, b = model.A, model.relation, model.rhs
    le, ge, eq = rel == LE, rel == GE, rel == EQ
    A_ub = sp.vstack([A[le], -A[ge]]).tocsr()
    b_ub = np.concatenate([b[le], -b[ge]])
    return A_ub, b_ub, A[eq], b[eq]


def _solve_lp(model: OptModel, opts: SolveOptions):
    A_ub, b_ub, A_eq, b_eq = _split_linear(model)
    options = {
        "primal_feasibility_tolerance": opts.primal_feasibility_tol,
        "dual_feasibility_tolerance": opts.dual_feasibility_tol,
    }
    if opts.time_limit is not None:
        options["time_limit"] = opts.time_limit

    def run(options):
        return linprog(
            model.c,
            A_ub=A_ub if A_ub.shape[0] else None,
            b_ub=b_ub if A_ub.shape[0] else None,
            A_eq=A_eq if A_eq.shape[0] else None,
            b_eq=b_eq if A_eq.shape[0] else None,
            bounds=np.column_stack([model.lb, model.ub]),
            method=opts.lp_method,
            options=options,
        )

    res = run(options)
    if res.status == 4 or res.status not in (0, 1, 2, 3):
        # Tight tolerances occasionally leave HiGHS with an unknown model
        # status; its default tolerances still meet the 1e-6 row check.
        relaxed = {key: v for key, v in options.items() if not key.endswith("feasibility_tolerance")}
        res = run(relaxed)
    status = {0: Status.OPTIMAL, 1: Status.LIMIT, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}.get(
        res.status, Status.ERROR
    )
    return status, (res.x if status is Status.OPTIMAL else None), res.message


def _solve_milp(model: OptModel, opts: SolveOptions):
    rel = model.relation
    lo = np.where((rel == GE) | (rel == EQ), model.rhs, -np.inf)
    hi = np.where((rel == LE) | (rel == EQ), model.rhs, np.inf)
    options = {}
    if opts.time_limit is not None:
        options["time_limit"] = opts.time_limit
    cons = [LinearConstraint(model.A, lo.astype(float), hi.astype(float))] if model.A.shape[0] else []
    res = milp(model.c, integrality=model.integer.astype(int), bounds=Bounds(model.lb, model.ub),
               constraints=cons, options=options)
    status = {0: Status.OPTIMAL, 1: Status.LIMIT, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}.get(
        res.status, Status.ERROR
    )
    x = res.x if status is Status.OPTIMAL else None
    if x is not None:
        x = np.where(model.integer, np.round(x), x)
    return status, x, res.message


def _solve_conic(model: OptModel, opts: SolveOptions):
    import clarabel

    nv = model.num_vars
    A, rel, b = model.A, model.relation, model.rhs
    eq, le, ge = rel == EQ, rel == LE, rel == GE
    eye = sp.identity(nv, format="csr")
    fin_ub = np.isfinite(model.ub)
    fin_lb = np.isfinite(model.lb)
    nonneg_A = sp.vstack([A[le], -A[ge], eye[fin_ub], -eye[fin_lb]])
    nonneg_b = np.concatenate([b[le], -b[ge], model.ub[fin_ub], -model.lb[fin_lb]])
    blocks = [A[eq], nonneg_A]
    rhs = [b[eq], nonneg_b]
    cones = []
    if eq.any():
        cones.append(clarabel.ZeroConeT(int(eq.sum())))
    if nonneg_A.shape[0]:
        cones.append(clarabel.NonnegativeConeT(nonneg_A.shape[0]))
    for cone in model.soc:
        et = sp.csr_matrix(([-1.0], ([0], [cone.t])), shape=(1, nv))
        blocks.append(sp.vstack([et, -cone.G]))
        rhs.append(np.concatenate([[0.0], cone.h]))
        cones.append(clarabel.SecondOrderConeT(1 + cone.G.shape[0]))
    Amat = sp.vstack(blocks).tocsc()
    bvec = np.concatenate(rhs)
    P = sp.csc_matrix((nv, nv))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = opts.conic_tol
    settings.tol_gap_rel = opts.conic_tol
    settings.tol_feas = opts.conic_tol
    settings.max_iter = opts.conic_max_iter
    if opts.time_limit is not None:
        settings.time_limit = float(opts.time_limit)
    sol = clarabel.DefaultSolver(P, model.c, Amat, bvec, cones, settings).solve()
    name = str(sol.status).split(".")[-1]
    if name in ("Solved", "AlmostSolved"):
        return Status.OPTIMAL, np.asarray(sol.x, float), name
    if "PrimalInfeasible" in name:
        return Status.INFEASIBLE, None, name
    if "DualInfeasible" in name:
        return Status.UNBOUNDED, None, name
    if name in ("MaxIterations", "MaxTime"):
        return Status.LIMIT, None, name
    return Status.ERROR, None, name


def _polish(model: OptModel, x: np.ndarray) -> np.ndarray:
    """Clip to bounds and lift cone heads that interior-point left marginally short."""
    x = np.clip(x, model.lb, model.ub)
    if model.soc:
        used_in_rows = np.zeros(model.num_vars, dtype=bool)
        used_in_rows[model.A.indices] = True
        for cone in model.soc:
            t = cone.t
            need = float(np.linalg.norm(cone.G @ x + cone.h))
            # Raising an objective-nonnegative head that no row touches cannot break feasibility.
            if x[t] < need <= model.ub[t] and not used_in_rows[t] and model.c[t] >= 0:
                x[t] = need
    return x


def solve(model: OptModel, opts: SolveOptions | None = None) -> SolveResult:
    """Solve ``model`` to optimality (or report why not)."""
    opts = opts or SolveOptions()
    if model.has_integers and not opts.allow_integer:
        raise CapabilityError("model has integer variables and integer solving is disabled")
    if model.has_integers and model.soc:
        raise CapabilityError("mixed-integer cone programs are not supported")
    t0 = time.perf_counter()
    if model.soc:
        status, x, msg = _solve_conic(model, opts)
    elif model.has_integers:
        status, x, msg = _solve_milp(model, opts)
    else:
        status, x, msg = _solve_lp(model, opts)
    elapsed = time.perf_counter() - t0
    if x is None:
        return SolveResult(status, None, None, elapsed, str(msg))
    x = _polish(model, x)
    lin, soc, bnd = violations(model, x)
    obj = float(model.c @ x + model.offset)
    return SolveResult(status, x, obj, elapsed, str(msg), lin, soc, bnd)



def write_lp(model: OptModel) -> str:
    """Export a linear (optionally integer) model in CPLEX LP text format.

    Variables are renamed ``v<j>``; a leading comment block maps them back.
    """
    if model.soc:
        raise CapabilityError("cone constraints cannot be exported to LP format")

    def term_list(cols: Sequence[int], vals: Sequence[float]) -> str:
        parts = []
        for j, a in zip(cols, vals):
            if a == 0:
                continue
            parts.append(f"{'-' if a < 0 else '+'} {abs(a)!r} v{j}")
        return " ".join(parts) if parts else "0 v0"

    out = ["\\ exported fhsap model"]
    out += [f"\\ v{j} = {model.var_name(j)}" for j in range(model.num_vars)]
    out.append("Minimize")
    nz = np.flatnonzero(model.c)
    obj = term_list(nz, model.c[nz])
    if model.offset:
        obj += f" + {model.offset!r} constant"
    out.append(f" obj: {obj}")
    out.append("Subject To")
    A = model.A.tocsr()
    for r in range(A.shape[0]):
        s, e = A.indptr[r], A.indptr[r + 1]
        out.append(f" c{r}: {term_list(A.indices[s:e], A.data[s:e])} "
                   f"{model.relation[r]} {model.rhs[r]!r}")
    out.append("Bounds")
    for j in range(model.num_vars):
        lo, hi = model.lb[j], model.ub[j]
        lo_s = "-inf" if np.isneginf(lo) else repr(float(lo))
        hi_s = "+inf" if np.isposinf(hi) else repr(float(hi))
        out.append(f" {lo_s} <= v{j} <= {hi_s}")
    if model.offset:
        out.append(" constant = 1")
    ints = np.flatnonzero(model.integer)
    if ints.size:
        out.append("General")
        out.append(" " + " ".join(f"v{j}" for j in ints))
    out.append("End")
    return "\n".join(out) + "\n"
