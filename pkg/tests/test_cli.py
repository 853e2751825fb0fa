import csv
import math
from pathlib import Path

import numpy as np
import pytest

from vagflow.bench import run_bench
from vagflow.cli import main
from vagflow.config import ConfigError, parse_config, serialize_config
from vagflow.mesh import generate_structured, write_mesh

DATA = Path(__file__).parent / "data"

T1_CONFIG = """\
# small t1 run
mesh.kind = split-triangles
mesh.n = 4
model.name = fokker_planck_log
tensor.lx = 1
tensor.ly = 10
potential.g = 1
initial.function = t1
exact.function = t1
time.t_final = 0.02
time.dt_init = 0.001
time.dt_max = 0.01
output.entropy = true
"""


def test_config_parse_and_round_trip():
    cfg = parse_config(T1_CONFIG)
    assert cfg.mesh_n == 4 and cfg.tensor_ly == 10.0 and cfg.output_entropy
    text = serialize_config(cfg)
    assert parse_config(text) == cfg
    assert serialize_config(parse_config(text)) == text


def test_config_model_params_round_trip():
    cfg = parse_config("model.name = custom\nmodel.params.m = 3\n")
    assert dict(cfg.model_params) == {"m": 3.0}
    assert parse_config(serialize_config(cfg)) == cfg


@pytest.mark.parametrize(
    "text, field",
    [
        ("mesh.n = 0\n", "mesh.n"),
        ("mesh.n = four\n", "mesh.n"),
        ("mesh.colour = red\n", "mesh.colour"),
        ("mesh.n = 4\nmesh.n = 5\n", "mesh.n"),
        ("time.dt_init = 0.1\ntime.dt_max = 0.01\n", "time.dt_max"),
        ("scheme = quasilinear\n", "scheme"),
        ("tensor.ly = -1\n", "tensor.ly"),
        ("bc.sides = left,middle\n", "bc.sides"),
        ("lumping.fraction = 1.5\n", "lumping.fraction"),
        ("potential.g = nan\n", "potential.g"),
        ("just words\n", "<line>"),
    ],
)
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field
    assert field in str(info.value)


def test_config_error_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config("mesh.n = 4\n\nmesh.bogus = 1\n")
    assert info.value.line == 3


def test_mesh_info_single_square(tmp_path, capsys, unit_square):
    path = tmp_path / "sq.mesh"
    write_mesh(unit_square, path)
    assert main(["mesh-info", str(path)]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    assert header == "h,theta,ell,zeta,cond_min,cond_max"
    vals = dict(zip(header.split(","), map(float, row.split(","))))
    assert vals["h"] == pytest.approx(1.0)
    assert vals["theta"] == pytest.approx(1 + math.sqrt(2))
    assert vals["zeta"] == pytest.approx(0.15)
    assert vals["cond_min"] == pytest.approx(1.0) and vals["cond_max"] == pytest.approx(1.0)


def test_run_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "t1.cfg"
    cfg.write_text(T1_CONFIG)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"report.csv", "summary.csv", "entropy.dat"}
    rows = list(csv.DictReader(open(out / "report.csv")))
    assert rows[0]["t"] == "0" and float(rows[-1]["t"]) == pytest.approx(0.02)
    summary = next(csv.DictReader(open(out / "summary.csv")))
    assert float(summary["err_l2"]) > 0 and int(summary["n_vertices"]) == 25


@pytest.mark.parametrize(
    "argv",
    [["run", "missing.cfg"], ["bench", "no_such_test"], ["mesh-info", "missing.mesh"], ["frobnicate"], []],
)
def test_invalid_input_exits_with_one(argv, capsys):
    assert main(argv) == 1


def test_bad_config_exits_with_one(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mesh.n = -3\n")
    assert main(["run", str(cfg)]) == 1
    assert "mesh.n" in capsys.readouterr().err


def test_malformed_mesh_exits_with_one(tmp_path, capsys):
    path = tmp_path / "bad.mesh"
    path.write_text("this is not a mesh\n")
    assert main(["mesh-info", str(path)]) == 1


def test_solver_abort_exits_with_two(tmp_path, capsys):
    cfg = tmp_path / "abort.cfg"
    cfg.write_text(T1_CONFIG + "newton.max_iter = 1\nnewton.tol = 1e-15\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "aborted" in capsys.readouterr().err


def test_mesh_file_relative_to_config(tmp_path):
    write_mesh(generate_structured("cartesian", 3), tmp_path / "m.mesh")
    cfg = tmp_path / "c.cfg"
    cfg.write_text("mesh.kind = file\nmesh.file = m.mesh\ntime.t_final = 0.01\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_bench_matches_golden_table(tmp_path):
    rows = run_bench("t1_nonlinear", 2, tmp_path, t_final=0.02)
    assert len(rows) == 2
    got, want = _read(tmp_path / "t1_nonlinear.csv"), _read(DATA / "t1_nonlinear_golden.csv")
    assert got[0].keys() == want[0].keys()
    for g, w in zip(got, want):
        for key in w:
            a, b = float(g[key]), float(w[key])
            if math.isnan(b):
                assert math.isnan(a)
            else:
                assert a == pytest.approx(b, rel=1e-8, abs=1e-14), key
    assert (tmp_path / "t1_nonlinear_report_1.csv").exists()


def test_bench_command_prints_table(tmp_path, capsys):
    assert main(["bench", "t4", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("h,n_vertices")
    assert len(lines) == 3
    names = {p.name for p in tmp_path.iterdir()}
    for kind in ("cartesian", "split-triangles"):
        for t in ("0.05", "0.2", "1"):
            assert f"t4_{kind}_t{t}.csv" in names
    snap = np.genfromtxt(tmp_path / "t4_cartesian_t1.csv", delimiter=",", names=True, dtype=None, encoding=None)
    assert snap["u"].min() > 0 and snap["u"].max() <= 1 + 1e-12
