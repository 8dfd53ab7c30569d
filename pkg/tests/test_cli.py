"""Exit codes and plumbing of the console entry point (all in-process)."""

import pathlib

import pytest

from blochfem.cli import main
from blochfem.trace import CSV_HEADER

REPO = pathlib.Path(__file__).resolve().parent.parent

FAST_LINEAR = """\
[run]
experiment = linear
steps_per_mesh = 3
max_level = 1
tol = 1e-8

[model]
kind = constant
eps2 = 8.0
"""


def test_run_writes_csv_and_exits_zero(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text(FAST_LINEAR)
    out = tmp_path / "trace.csv"
    assert main(["run", "--config", str(ini), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) > 5
    assert "lambda =" in capsys.readouterr().out


def test_nonconvergence_exits_two_with_partial_trace(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text(FAST_LINEAR.replace("tol = 1e-8", "tol = 1e-13\nmax_fine_steps = 3"))
    out = tmp_path / "trace.csv"
    assert main(["run", "--config", str(ini), "--out", str(out)]) == 2
    # header + 3 coarse steps + the 3-step fine budget
    assert len(out.read_text().splitlines()) == 7
    assert "did not reach" in capsys.readouterr().err


def test_missing_config_exits_one(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_bad_config_key_exits_one(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[run]\nexperiment = linear\nwibble = 1\n")
    assert main(["run", "--config", str(ini)]) == 1
    assert "wibble" in capsys.readouterr().err


def test_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run"])  # --config is required
    assert info.value.code == 1


def test_reference_prints_value(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text(FAST_LINEAR.replace("max_level = 1", "max_level = 0"))
    assert main(["reference", "--config", str(ini)]) == 0
    assert "mu =" in capsys.readouterr().out


def test_sweep_writes_csv(tmp_path, capsys):
    ini = tmp_path / "sweep.ini"
    ini.write_text(
        "[run]\nexperiment = k_sweep\nsteps_per_mesh = 5\nmax_level = 0\n"
        "tol = 1e-8\n\n[model]\nkind = constant\neps2 = 1.0\n\n"
        "[sweep]\nfrom_kx = 0.0\nfrom_ky = 0.0\nto_kx = 1.0\nto_ky = 0.0\npoints = 3\n"
    )
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", str(ini), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "kx,ky,lambda1"
    assert len(lines) == 4


def test_check_passes(capsys):
    assert main(["check"]) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_seed_override(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(FAST_LINEAR)
    from blochfem.driver import RunConfig

    cfg = RunConfig.from_ini(ini)
    assert cfg.seed == 0
    # the flag must override the file
    import blochfem.cli as cli

    class Args:
        config = str(ini)
        seed = 7
        out = None

    assert cli._load_config(Args()).seed == 7
