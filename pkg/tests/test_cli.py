import json

import pytest

from hnmg.cli import main


def test_solve_quadrant_l3(tmp_path):
    rc = main(["solve", "--strategy", "quadrant", "--levels", "3",
               "--family", "bilinear", "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "solve_report.json").read_text())
    assert rep["converged"] is True
    assert abs(rep["n10"] - 6) <= 3
    assert (tmp_path / "solution.vtk").exists()
    # stable key ordering for the emitted report
    keys = list(rep)
    assert keys[:6] == ["method", "converged", "iterations", "n10", "rbar",
                        "wall_time_s"]


def test_solve_uniform_l2(tmp_path):
    rc = main(["solve", "--strategy", "uniform", "--levels", "2",
               "--out", str(tmp_path)])
    assert rc == 0


def test_mesh_levels_written(tmp_path):
    rc = main(["mesh", "--strategy", "quadrant", "--levels", "3",
               "--out", str(tmp_path)])
    assert rc == 0
    for k in range(4):
        assert (tmp_path / f"level_{k}.vtk").exists()
    summary = json.loads((tmp_path / "mesh_summary.json").read_text())
    assert summary[-1]["hanging"] > 0
    assert summary[0]["hanging"] == 0
    assert all(s["interior"] + s["master"] + s["hanging"] == s["nodes"]
               for s in summary)


def test_mesh_level_zero_echo(tmp_path):
    rc = main(["mesh", "--levels", "0", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "level_0.vtk").exists()
    summary = json.loads((tmp_path / "mesh_summary.json").read_text())
    assert len(summary) == 1 and summary[0]["elements"] == 4


def test_invalid_strategy_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["mesh", "--strategy", "spiral", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_missing_mesh_config_file(tmp_path):
    rc = main(["solve", "--config", str(tmp_path / "nope.cfg"),
               "--out", str(tmp_path)])
    assert rc == 2


def test_config_file_merging(tmp_path):
    cfg = tmp_path / "case.cfg"
    cfg.write_text("strategy = circle\nlevels = 3\nomega = 0.8\n")
    rc = main(["solve", "--config", str(cfg), "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "solve_report.json").read_text())
    assert rep["strategy"] == "circle"


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "case.cfg"
    cfg.write_text("wibble = 3\n")
    rc = main(["solve", "--config", str(cfg), "--out", str(tmp_path)])
    assert rc == 2


def test_spectrum_csv(tmp_path):
    rc = main(["spectrum", "--levels", "3", "--method", "global", "--nu", "1",
               "--seed", "1", "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "spectrum.csv").read_text().strip().splitlines()
    assert lines[0] == "method,level,element,nu,rho"
    assert len(lines) == 2
    rho = float(lines[1].split(",")[-1])
    assert rho < 0.1


def test_bench_row_count(tmp_path):
    rc = main(["bench", "--strategy", "quadrant", "--levels", "4",
               "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "bench.csv").read_text().strip().splitlines()
    assert lines[0] == "strategy,family,L,dofs,n10,rbar,wall_time_s,exponent"
    assert len(lines) == 3  # L = 3, 4
