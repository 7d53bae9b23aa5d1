"""FHSAP instance data, random generation and JSON serialization.

An instance has ``n`` terminals and ``k`` fixed hubs. ``demand[i, j]`` is the
flow from terminal ``i`` to terminal ``j``; ``cost_out[i, s]`` is the per-unit
cost from terminal ``i`` up to hub ``s``; ``cost_in[j, t]`` is the per-unit
cost from hub ``t`` down to terminal ``j``; ``cost_hub`` is the symmetric,
zero-diagonal inter-hub cost matrix.

Random instances use numpy's PCG64 bit generator seeded with a 64-bit
integer. Draw order is fixed: demand (n*n, row-major), terminal-hub costs
(n*k, row-major), then the strict upper triangle of ``cost_hub`` (row-major).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "Instance",
    "Assignment",
    "InstanceError",
    "InstanceFormatError",
    "Uniform",
    "Constant",
    "parse_hub_cost",
    "validate",
    "totals",
    "generate_random",
    "to_json",
    "from_json",
    "load",
    "save",
    "make_rng",
]

ROW_SUM_TOL = 1e-9
FILE_SUFFIX = ".fhsap.json"


class InstanceError(ValueError):
    """An instance or assignment violates one of its invariants.

    ``index`` holds the offending matrix position when there is one.
    """

    def __init__(self, message: str, field: str | None = None, index: tuple | None = None):
        super().__init__(message)
        self.field = field
        self.index = index


class InstanceFormatError(ValueError):
    """Malformed instance document."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        super().__init__(message)
        self.field = field
        self.line = line


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    n: int
    k: int
    demand: np.ndarray
    cost_out: np.ndarray
    cost_in: np.ndarray
    cost_hub: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "k", int(self.k))
        for name in ("demand", "cost_out", "cost_in", "cost_hub"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.n == other.n
            and self.k == other.k
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("demand", "cost_out", "cost_in", "cost_hub")
            )
        )

    __hash__ = None

    def with_demand(self, demand) -> "Instance":
        """Copy of this instance with the demand matrix replaced."""
        return Instance(self.n, self.k, demand, self.cost_out, self.cost_in, self.cost_hub)

    @property
    def uniform_hub_cost(self) -> float | None:
        """Common off-diagonal hub cost, or None when costs differ (or k == 1)."""
        if self.k < 2:
            return None
        off = self.cost_hub[~np.eye(self.k, dtype=bool)]
        return float(off[0]) if np.all(off == off[0]) else None


@dataclass(frozen=True, eq=False)
class Assignment:
    """Row-stochastic terminal-to-hub allocation matrix."""

    x: np.ndarray
    integral: bool = False

    def __post_init__(self):
        x = _frozen(self.x)
        if x.ndim != 2:
            raise InstanceError(f"assignment must be 2-D, got shape {x.shape}", "x")
        if np.any(x < -ROW_SUM_TOL) or np.any(x > 1 + ROW_SUM_TOL):
            i, s = np.argwhere((x < -ROW_SUM_TOL) | (x > 1 + ROW_SUM_TOL))[0]
            raise InstanceError(f"assignment entry out of [0,1] at ({i},{s})", "x", (int(i), int(s)))
        dev = np.abs(x.sum(axis=1) - 1.0)
        if np.any(dev > ROW_SUM_TOL):
            i = int(np.argmax(dev))
            raise InstanceError(f"row {i} sums to {x[i].sum()!r}, expected 1", "x", (i,))
        if self.integral and not np.all((x == 0.0) | (x == 1.0)):
            i, s = np.argwhere((x != 0.0) & (x != 1.0))[0]
            raise InstanceError(f"non-binary entry at ({i},{s}) in integral assignment", "x", (int(i), int(s)))
        object.__setattr__(self, "x", x)

    @classmethod
    def from_hubs(cls, hubs, k: int) -> "Assignment":
        hubs = np.asarray(hubs, dtype=int)
        x = np.zeros((hubs.size, k))
        x[np.arange(hubs.size), hubs] = 1.0
        return cls(x, integral=True)

    @property
    def hubs(self) -> np.ndarray:
        """Hub index per terminal; only meaningful for integral assignments."""
        if not self.integral:
            raise InstanceError("hub map requested for a fractional assignment")
        return np.argmax(self.x, axis=1)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return self.integral == other.integral and np.array_equal(self.x, other.x)

    __hash__ = None


def validate(instance: Instance) -> None:
    """Raise InstanceError if any instance invariant fails."""
    n, k = instance.n, instance.k
    if n < 1 or k < 1:
        raise InstanceError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    shapes = {"demand": (n, n), "cost_out": (n, k), "cost_in": (n, k), "cost_hub": (k, k)}
    for name, shape in shapes.items():
        arr = getattr(instance, name)
        if arr.shape != shape:
            raise InstanceError(f"{name} has shape {arr.shape}, expected {shape}", name)
    for name in shapes:
        arr = getattr(instance, name)
        bad = np.argwhere(~np.isfinite(arr) | (arr < 0))
        if bad.size:
            idx = tuple(int(v) for v in bad[0])
            what = "demand" if name == "demand" else f"{name} entry"
            raise InstanceError(f"negative or non-finite {what} at {idx}", name, idx)
    C = instance.cost_hub
    diag = np.flatnonzero(np.diag(C))
    if diag.size:
        s = int(diag[0])
        raise InstanceError(f"nonzero cost_hub diagonal at ({s},{s})", "cost_hub", (s, s))
    asym = np.argwhere(np.triu(C != C.T))
    if asym.size:
        s, t = (int(v) for v in asym[0])
        raise InstanceError(f"cost_hub asymmetric at ({s},{t})", "cost_hub", (s, t))


def totals(instance: Instance) -> tuple[np.ndarray, np.ndarray]:
    """Outgoing (row sums) and incoming (column sums) demand per terminal."""
    return instance.demand.sum(axis=1), instance.demand.sum(axis=0)


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if self.low < 0 or self.high < 0 or self.low > self.high:
            raise ValueError(f"invalid uniform bounds [{self.low}, {self.high}]")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.low, self.high, size)

    def __str__(self):
        return f"uniform:{self.low:g}:{self.high:g}"


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"negative constant hub cost {self.value}")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, float(self.value))

    def __str__(self):
        return f"const:{self.value:g}"


HubCostSpec = Union[Uniform, Constant]

# Off-diagonal hub-cost distributions used for the random benchmark rows.
TABLE1_HUB_COSTS: tuple[HubCostSpec, ...] = (
    Uniform(0, 20),
    Uniform(4, 20),
    Uniform(14, 20),
    Constant(10),
    Constant(20),
)


def parse_hub_cost(text: str) -> HubCostSpec:
    """Parse ``const:C`` or ``uniform:A:B`` (``U[A,B]`` also accepted)."""
    t = text.strip()
    m = re.fullmatch(r"(?:const|constant):([^:]+)", t, re.I) or re.fullmatch(r"([0-9.eE+-]+)", t)
    if m:
        return Constant(float(m.group(1)))
    m = re.fullmatch(r"(?:uniform|u):([^:]+):([^:]+)", t, re.I) or re.fullmatch(
        r"U\[([^,\]]+),([^\]]+)\]", t, re.I
    )
    if m:
        return Uniform(float(m.group(1)), float(m.group(2)))
    raise ValueError(f"unrecognized hub cost spec {text!r}; use const:C or uniform:A:B")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def generate_random(n: int, k: int, hub_cost: HubCostSpec | str, seed: int) -> Instance:
    """Random instance: demand U[0,100] with zero diagonal, terminal-hub costs U[1,11]."""
    if n < 1 or k < 1:
        raise ValueError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    if isinstance(hub_cost, str):
        hub_cost = parse_hub_cost(hub_cost)
    rng = make_rng(seed)
    demand = rng.uniform(0.0, 100.0, (n, n))
    np.fill_diagonal(demand, 0.0)
    cost = rng.uniform(1.0, 11.0, (n, k))
    iu = np.triu_indices(k, 1)
    hub = np.zeros((k, k))
    hub[iu] = hub_cost.draw(rng, len(iu[0]))
    hub = hub + hub.T
    inst = Instance(n, k, demand, cost, cost.copy(), hub)
    validate(inst)
    return inst


_FIELDS = ("n", "k", "demand", "cost_out", "cost_in", "cost_hub")


def to_dict(instance: Instance) -> dict:
    return {
        "n": instance.n,
        "k": instance.k,
        "demand": instance.demand.tolist(),
        "cost_out": instance.cost_out.tolist(),
        "cost_in": instance.cost_in.tolist(),
        "cost_hub": instance.cost_hub.tolist(),
    }


def to_json(instance: Instance) -> str:
    # json writes floats with repr(), which round-trips exactly.
    return json.dumps(to_dict(instance), indent=1)


def _field_line(text: str, field: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(field), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def from_dict(doc: dict, text: str = "") -> Instance:
    if not isinstance(doc, dict):
        raise InstanceFormatError("instance document must be a JSON object")
    for f in _FIELDS:
        if f not in doc:
            raise InstanceFormatError(f"missing field {f!r}", field=f)
    n, k = doc["n"], doc["k"]
    for f in ("n", "k"):
        if not isinstance(doc[f], int) or isinstance(doc[f], bool):
            raise InstanceFormatError(f"field {f!r} must be an integer", f, _field_line(text, f))
    shapes = {"demand": (n, n), "cost_out": (n, k), "cost_in": (n, k), "cost_hub": (k, k)}
    arrays = {}
    for f, (rows, cols) in shapes.items():
        val = doc[f]
        line = _field_line(text, f)
        if not isinstance(val, list) or any(not isinstance(r, list) for r in val):
            raise InstanceFormatError(f"field {f!r} must be an array of arrays", f, line)
        if len(val) != rows:
            raise InstanceFormatError(f"field {f!r} has {len(val)} rows, expected {rows}", f, line)
        for r, row in enumerate(val):
            if len(row) != cols:
                raise InstanceFormatError(
                    f"field {f!r} row {r} has {len(row)} entries, expected {cols}", f, line
                )
        try:
            arrays[f] = np.array(val, dtype=float).reshape(rows, cols)
        except (TypeError, ValueError) as exc:
            raise InstanceFormatError(f"field {f!r}: non-numeric entry ({exc})", f, line) from None
    inst = Instance(n, k, **arrays)
    validate(inst)
    return inst


def from_json(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}",
                                  line=exc.lineno) from None
    return from_dict(doc, text)


def save(instance: Instance, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(to_json(instance) + "\n")
    return path


def load(path: str | Path) -> Instance:
    return from_json(Path(path).read_text())
