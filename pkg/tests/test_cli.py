from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest

from fhsap import instance as im
from fhsap.cli import BENCH_COLUMNS, EXIT_SIZE, EXIT_USAGE, ROBUST_COLUMNS, SOLVE_COLUMNS, main


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def inst_file(tmp_path):
    path = tmp_path / "a.fhsap.json"
    assert main(["gen", "--n", "6", "--k", "3", "--hub-cost", "const:5", "--seed", "1", "--out", str(path)]) == 0
    return path


def test_gen_writes_valid_instance(tmp_path):
    path = tmp_path / "b.fhsap.json"
    assert main(["gen", "--n", "8", "--k", "4", "--hub-cost", "uniform:14:20", "--seed", "1",
                 "--out", str(path)]) == 0
    inst = im.load(path)
    off = inst.cost_hub[~np.eye(4, dtype=bool)]
    assert np.all((off >= 14) & (off <= 20))


def test_gen_requires_out():
    with pytest.raises(SystemExit) as err:
        main(["gen", "--n", "3", "--k", "2", "--hub-cost", "const:1"])
    assert err.value.code == EXIT_USAGE


def test_seed_from_environment(tmp_path, monkeypatch):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    monkeypatch.setenv("FHSAP_SEED", "17")
    main(["gen", "--n", "4", "--k", "2", "--hub-cost", "const:1", "--out", str(a)])
    main(["gen", "--n", "4", "--k", "2", "--hub-cost", "const:1", "--seed", "17", "--out", str(b)])
    assert a.read_text() == b.read_text()


def test_solve_row(inst_file, capsys):
    assert main(["solve", "--instance", str(inst_file), "--exact-cap", "1000", "--trials", "5000"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == ",".join(SOLVE_COLUMNS)
    (row,) = read_csv(out)
    assert float(row["gap_pct"]) >= -1e-4
    assert float(row["w"]) >= float(row["opt"]) * (1 - 1e-9)
    assert float(row["v"]) <= float(row["opt"]) * (1 + 1e-6)


def test_solve_rejects_zero_trials(inst_file):
    with pytest.raises(SystemExit) as err:
        main(["solve", "--instance", str(inst_file), "--trials", "0"])
    assert err.value.code == EXIT_USAGE


def test_solve_lp1_size_guard(tmp_path, capsys):
    path = tmp_path / "big.fhsap.json"
    main(["gen", "--n", "200", "--k", "10", "--hub-cost", "const:10", "--seed", "0", "--out", str(path)])
    assert main(["solve", "--instance", str(path), "--relaxation", "lp1"]) == EXIT_SIZE
    assert "N/A" in capsys.readouterr().err


def test_bad_instance_file(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"n": 2}')
    assert main(["solve", "--instance", str(path)]) == EXIT_USAGE
    assert "missing field" in capsys.readouterr().err


def test_bench_empty_setup_list(capsys):
    assert main(["bench"]) == 0
    assert capsys.readouterr().out.strip() == ",".join(BENCH_COLUMNS)


def test_bench_rows_and_determinism(tmp_path):
    args = ["bench", "--setup", "6x3", "--trials", "200", "--seed", "4", "--exact-cap", "1000", "--no-timings"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_csv(a.read_text())
    assert [r["hub_cost"] for r in rows] == ["uniform:0:20", "uniform:4:20", "uniform:14:20", "const:10", "const:20"]
    for r in rows:
        assert r["status"] == "ok"
        for col in BENCH_COLUMNS:
            if col.startswith("gap") and r[col]:
                assert float(r[col]) >= -1e-4
        assert float(r["v1"]) <= float(r["opt"]) * (1 + 1e-6)
        assert r["cpu_lp3"] == ""


def test_bench_json_matches_csv(tmp_path):
    args = ["bench", "--setup", "4x2", "--hub-cost", "const:10", "--trials", "50", "--no-timings"]
    c, j = tmp_path / "r.csv", tmp_path / "r.json"
    main(args + ["--out", str(c)])
    main(args + ["--format", "json", "--out", str(j)])
    (row_c,) = read_csv(c.read_text())
    (row_j,) = json.loads(j.read_text())
    assert list(row_j) == BENCH_COLUMNS
    assert float(row_c["w3"]) == row_j["w3"]


def test_bench_lp1_guard_blanks_cells(monkeypatch, tmp_path):
    import fhsap.formulations as fm
    real = fm.build_milp1
    monkeypatch.setitem(fm.BUILDERS, "lp1", lambda inst, relax=True: real(inst, relax, cap=1))
    out = tmp_path / "g.csv"
    assert main(["bench", "--setup", "4x2", "--hub-cost", "const:10", "--trials", "20", "--out", str(out)]) == 0
    (row,) = read_csv(out.read_text())
    assert row["v1"] == "" and row["gap_lp1_gra_lp3"] == ""
    assert row["gap_lp3_gra_lp3"] != ""
    assert "lp1 N/A" in row["status"]


def test_robust_row_and_zero_budget(inst_file, tmp_path):
    set_file = tmp_path / "s.json"
    assert main(["gen-set", "--instance", str(inst_file), "--budget", "0", "--seed", "2", "--out", str(set_file)]) == 0
    out = tmp_path / "r.json"
    assert main(["robust", "--instance", str(inst_file), "--set", str(set_file), "--trials", "500",
                 "--format", "json", "--out", str(out)]) == 0
    (row,) = json.loads(out.read_text())
    assert list(row) == ROBUST_COLUMNS
    assert abs(row["gap1"]) <= 1e-4 and abs(row["gap2"]) <= 1e-4


def test_robust_rerun_identical(inst_file, tmp_path):
    args = ["robust", "--instance", str(inst_file), "--budget", "30", "--sigma-seed", "3", "--trials", "300",
            "--no-timings"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(args + ["--out", str(a)])
    main(args + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_robust_premise_error(tmp_path, capsys):
    path = tmp_path / "u.fhsap.json"
    main(["gen", "--n", "4", "--k", "3", "--hub-cost", "uniform:0:20", "--out", str(path)])
    assert main(["robust", "--instance", str(path), "--budget", "5"]) == EXIT_USAGE
    assert "premise" in capsys.readouterr().err
