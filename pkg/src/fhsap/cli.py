"""Command-line harness: instance generation, single solves, benchmark tables, robust comparison.

Exit codes: 0 success, 2 usage error, 3 size guard, 4 solver failure.

``bench`` and ``robust`` write a fixed column order (see ``BENCH_COLUMNS`` and
``ROBUST_COLUMNS``); JSON output carries exactly the same fields. Timing
columns are left blank under ``--no-timings`` so repeated runs are
byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Sequence

from . import instance as inst_mod
from .exact import DEFAULT_CAP, EnumerationCapError, brute_force
from .formulations import SizeGuardError
from .instance import TABLE1_HUB_COSTS, Instance, generate_random, parse_hub_cost
from .pipeline import SolverFailure, solve_and_round
from .robust import PremiseError, UncertaintySet, gaps, generate_uncertainty_set, robust_solve, worst_case_cost

EXIT_OK, EXIT_USAGE, EXIT_SIZE, EXIT_SOLVER = 0, 2, 3, 4

SOLVE_COLUMNS = ["instance", "n", "k", "relaxation", "seed", "trials", "v", "w", "gap_pct",
                 "integral_lp", "opt", "cpu_lp", "cpu_round"]

BENCH_COLUMNS = [
    "n", "k", "hub_cost", "seed",
    "cpu_lp1", "gap_lp1_gra_lp1",
    "cpu_lp2", "gap_lp1_gra_lp2", "gap_lp3_gra_lp2",
    "cpu_lp3", "gap_lp1_gra_lp3", "gap_lp3_gra_lp3",
    "v1", "v2", "v3", "w1", "w2", "w3", "opt", "status",
]

ROBUST_COLUMNS = ["n", "k", "budget", "p", "time1", "time2",
                  "F_nom_at_nominal_choice", "F_nom_at_robust_choice", "gap1",
                  "F_worst_at_nominal_choice", "F_worst_at_robust_choice", "gap2",
                  "robust_rounded", "relaxation_value"]

GAP_FLOOR = -1e-4  # percent


class UsageError(Exception):
    pass


def _gap(w: float, v: float) -> float:
    return (w / v - 1.0) * 100.0


def _default_seed() -> int:
    return int(os.environ.get("FHSAP_SEED", "0"))


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _setup(text: str) -> tuple[int, int]:
    try:
        n, k = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"setup must look like 50x5, got {text!r}") from None
    if n < 1 or k < 1:
        raise argparse.ArgumentTypeError("setup sizes must be >= 1")
    return n, k


def _hub_cost(text: str):
    try:
        return parse_hub_cost(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _maybe_exact(instance: Instance, cap: int) -> float | None:
    if cap <= 0:
        return None
    try:
        return brute_force(instance, cap=cap).cost
    except EnumerationCapError:
        return None


def run_solve(instance: Instance, relaxation: str, trials: int, seed: int,
              exact_cap: int = 0, name: str = "", timings: bool = True) -> dict:
    sol = solve_and_round(instance, relaxation, trials, seed)
    return {
        "instance": name,
        "n": instance.n,
        "k": instance.k,
        "relaxation": relaxation,
        "seed": seed,
        "trials": trials,
        "v": sol.lp_value,
        "w": sol.cost,
        "gap_pct": _gap(sol.cost, sol.lp_value) if sol.lp_value > 0 else None,
        "integral_lp": sol.fractional.integral,
        "opt": _maybe_exact(instance, exact_cap),
        "cpu_lp": sol.lp_time if timings else None,
        "cpu_round": sol.round_time if timings else None,
    }


def bench_row(n: int, k: int, hub_cost, seed: int, trials: int, relaxations: Sequence[str] = ("lp1", "lp2", "lp3"),
              exact_cap: int = 0, timings: bool = True) -> dict:
    """One benchmark row; failures blank the affected cells instead of aborting."""
    row = {c: None for c in BENCH_COLUMNS}
    row.update(n=n, k=k, hub_cost=str(hub_cost), seed=seed)
    notes = []
    instance = generate_random(n, k, hub_cost, seed)
    results = {}
    for kind in relaxations:
        try:
            results[kind] = solve_and_round(instance, kind, trials, seed)
        except SizeGuardError:
            notes.append(f"{kind} N/A (size guard)")
        except SolverFailure as exc:
            notes.append(f"{kind} N/A ({exc})")
    for idx, kind in ((1, "lp1"), (2, "lp2"), (3, "lp3")):
        if kind in results:
            r = results[kind]
            row[f"v{idx}"] = r.lp_value
            row[f"w{idx}"] = r.cost
            if timings:
                row[f"cpu_{kind}"] = r.lp_time
    v1, v3 = row["v1"], row["v3"]
    for idx, kind in ((1, "lp1"), (2, "lp2"), (3, "lp3")):
        w = row[f"w{idx}"]
        if w is None:
            continue
        if v1 is not None and v1 > 0:
            row[f"gap_lp1_gra_{kind}"] = _gap(w, v1)
        if kind != "lp1" and v3 is not None and v3 > 0:
            row[f"gap_lp3_gra_{kind}"] = _gap(w, v3)
    row["opt"] = _maybe_exact(instance, exact_cap)
    row["status"] = "; ".join(notes) if notes else "ok"
    return row


def run_bench(setups: Sequence[tuple[int, int]], hub_costs: Sequence, seed: int, trials: int,
              relaxations: Sequence[str] = ("lp1", "lp2", "lp3"), exact_cap: int = 0,
              timings: bool = True) -> list[dict]:
    """Rows in declaration order; row ``r`` uses instance and rounding seed ``seed + r``."""
    rows = []
    r = 0
    for n, k in setups:
        for spec in hub_costs:
            rows.append(bench_row(n, k, spec, seed + r, trials, relaxations, exact_cap, timings))
            r += 1
    return rows


def run_robust(instance: Instance, uset: UncertaintySet, trials: int, seed: int,
               timings: bool = True) -> dict:
    nominal_instance = instance.with_demand(uset.nominal)
    t0 = time.perf_counter()
    nominal = solve_and_round(nominal_instance, "lp3", trials, seed)
    time1 = time.perf_counter() - t0
    rob = robust_solve(instance, uset, trials, seed)
    x_nom, x_rob = nominal.assignment, rob.assignment
    ev_nom = worst_case_cost(instance, x_nom, uset)
    ev_rob = rob.evaluation
    g1, g2 = gaps(instance, uset, x_nom, x_rob)
    return {
        "n": instance.n,
        "k": instance.k,
        "budget": uset.budget,
        "p": uset.p,
        "time1": time1 if timings else None,
        "time2": rob.total_time if timings else None,
        "F_nom_at_nominal_choice": ev_nom.nominal,
        "F_nom_at_robust_choice": ev_rob.nominal,
        "gap1": g1,
        "F_worst_at_nominal_choice": ev_nom.worst,
        "F_worst_at_robust_choice": ev_rob.worst,
        "gap2": g2,
        "robust_rounded": rob.rounded,
        "relaxation_value": rob.relaxation_value,
    }


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def to_json_rows(rows: Sequence[dict], columns: Sequence[str]) -> str:
    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v
    return json.dumps([{c: clean(r.get(c)) for c in columns} for r in rows], indent=1) + "\n"


def _emit(rows, columns, fmt: str, out: str | None) -> None:
    text = to_csv(rows, columns) if fmt == "csv" else to_json_rows(rows, columns)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fhsap", description="Fixed-hub single allocation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random instance file")
    g.add_argument("--n", type=_positive, required=True)
    g.add_argument("--k", type=_positive, required=True)
    g.add_argument("--hub-cost", type=_hub_cost, required=True, help="const:C or uniform:A:B")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)

    gs = sub.add_parser("gen-set", help="generate an uncertainty set for an instance")
    gs.add_argument("--instance", required=True)
    gs.add_argument("--budget", type=float, required=True)
    gs.add_argument("--p", type=float, default=2.0)
    gs.add_argument("--seed", type=int, default=None)
    gs.add_argument("--out", required=True)

    def common(sp, with_format=True):
        sp.add_argument("--trials", type=_positive, default=5000)
        sp.add_argument("--seed", type=int, default=None)
        if with_format:
            sp.add_argument("--format", choices=("csv", "json"), default="csv")
            sp.add_argument("--out", default=None)
            sp.add_argument("--no-timings", action="store_true")

    s = sub.add_parser("solve", help="solve one relaxation and round it")
    s.add_argument("--instance", required=True)
    s.add_argument("--relaxation", choices=("lp1", "lp2", "lp2p", "lp3"), default="lp3")
    s.add_argument("--exact-cap", type=int, default=0, help="enumerate OPT when k^n <= cap")
    common(s)

    b = sub.add_parser("bench", help="benchmark relaxations and rounding over setups x hub-cost specs")
    b.add_argument("--setup", type=_setup, action="append", default=[], help="NxK, repeatable")
    b.add_argument("--hub-cost", type=_hub_cost, action="append", default=None,
                   help="repeatable; defaults to the five standard specs")
    b.add_argument("--relaxations", default="lp1,lp2,lp3")
    b.add_argument("--exact-cap", type=int, default=0)
    common(b)

    r = sub.add_parser("robust", help="nominal vs robust comparison on one instance")
    r.add_argument("--instance", required=True)
    r.add_argument("--set", dest="set_file", default=None, help="uncertainty set JSON")
    r.add_argument("--budget", type=float, default=None, help="override (or set) the budget")
    r.add_argument("--sigma-seed", type=int, default=None, help="generate weights when no --set")
    common(r)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    seed = args.seed if getattr(args, "seed", None) is not None else _default_seed()
    timings = not getattr(args, "no_timings", False)
    try:
        if args.command == "gen":
            instance = generate_random(args.n, args.k, args.hub_cost, seed)
            inst_mod.save(instance, args.out)
            return EXIT_OK

        if args.command == "gen-set":
            instance = inst_mod.load(args.instance)
            uset = generate_uncertainty_set(instance, args.budget, seed, args.p)
            Path(args.out).write_text(uset.to_json() + "\n")
            return EXIT_OK

        if args.command == "solve":
            instance = inst_mod.load(args.instance)
            row = run_solve(instance, args.relaxation, args.trials, seed, args.exact_cap,
                            name=Path(args.instance).name, timings=timings)
            _emit([row], SOLVE_COLUMNS, args.format, args.out)
            return EXIT_OK

        if args.command == "bench":
            kinds = [k.strip() for k in args.relaxations.split(",") if k.strip()]
            bad = [k for k in kinds if k not in ("lp1", "lp2", "lp2p", "lp3")]
            if bad:
                parser.error(f"unknown relaxations: {bad}")
            specs = args.hub_cost or list(TABLE1_HUB_COSTS)
            rows = run_bench(args.setup, specs, seed, args.trials, kinds, args.exact_cap, timings)
            _emit(rows, BENCH_COLUMNS, args.format, args.out)
            return EXIT_OK

        if args.command == "robust":
            instance = inst_mod.load(args.instance)
            if args.set_file:
                uset = UncertaintySet.load(args.set_file)
                if args.budget is not None:
                    uset = uset.with_budget(args.budget)
            else:
                if args.budget is None:
                    parser.error("--budget is required without --set")
                sseed = args.sigma_seed if args.sigma_seed is not None else seed
                uset = generate_uncertainty_set(instance, args.budget, sseed)
            row = run_robust(instance, uset, args.trials, seed, timings)
            _emit([row], ROBUST_COLUMNS, args.format, args.out)
            return EXIT_OK
    except SizeGuardError as exc:
        print(f"fhsap: N/A: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except PremiseError as exc:
        print(f"fhsap: premise error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverFailure, RuntimeError) as exc:
        print(f"fhsap: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        print(f"fhsap: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
