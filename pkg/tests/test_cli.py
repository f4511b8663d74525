"""Command-line parsing, layering and outputs."""

import csv

import numpy as np
import pytest

from invmeshless.cli import (
    ConfigError,
    RunConfig,
    main,
    parse_config,
    parse_value,
    read_config_file,
)


def _run(tmp_path, *argv):
    return main([*argv, "--output", str(tmp_path), "--plots", "false", "--jobs", "1"])


def test_defaults():
    cfg, _ = parse_config(["table1"])
    assert (cfg.n, cfg.dt, cfg.n_steps, cfg.r, cfg.mu_noninv) == (40, 1e-3, 1000, 0.25, 1.0)
    assert cfg.seeds == tuple(range(10))
    assert cfg.solution_name == "all"
    assert cfg.experiment_config().mu_inv is None


@pytest.mark.parametrize("text,expected", [("0-3", (0, 1, 2, 3)), ("1,4", (1, 4)), ("0-1,7", (0, 1, 7))])
def test_seed_lists(text, expected):
    assert parse_value("seeds", text) == expected


def test_bad_value():
    with pytest.raises(ConfigError, match="'n'"):
        parse_value("n", "forty")


def test_unknown_key_in_file(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("radius = 0.3\n")
    with pytest.raises(ConfigError, match="'radius'"):
        read_config_file(path)
    assert main(["table1", "--config", str(path)]) == 2


def test_file_comments_and_dashes(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# settings\nn-steps = 5   # short\nmu_noninv = 2\n\n")
    assert read_config_file(path) == {"n_steps": 5, "mu_noninv": 2.0}


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("command = sweep-r\nr = 0.3\nn = 30\n")
    cfg, _ = parse_config(["--config", str(path), "--r", "0.35"])
    assert cfg.command == "sweep-r" and cfg.r == 0.35 and cfg.n == 30


@pytest.mark.parametrize(
    "argv",
    [
        ["table1", "--jitter-frac", "0.6"],
        ["table1", "--n", "3"],
        ["table1", "--dt", "-1"],
        ["table1", "--b", "0.5"],
        ["sweep-mu", "--solution", "all"],
        ["single-run", "--solution", "u3", "--c1", "-1", "--c2", "1.5"],
        ["sweep-mu", "--mu-values", "1,2", "--mu-values-inv", "3"],
        [],
    ],
)
def test_invalid_configurations_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "invalid config key" in capsys.readouterr().err


def test_unknown_flag_is_rejected():
    with pytest.raises(SystemExit) as info:
        main(["table1", "--radius", "0.3"])
    assert info.value.code == 2


def test_zero_steps_single_run(tmp_path):
    assert _run(tmp_path, "single-run", "--solution", "u1", "--n-steps", "0") == 0
    rows = list(csv.DictReader((tmp_path / "final_state.csv").open()))
    assert all(float(r["abs_error"]) == 0.0 for r in rows)


def test_single_run_columns_agree(tmp_path):
    assert _run(tmp_path, "single-run", "--solution", "u1", "--n-steps", "50", "--trajectory-stride", "25") == 0
    rows = list(csv.DictReader((tmp_path / "final_state.csv").open()))
    assert list(rows[0]) == ["index", "x", "u", "u_exact", "abs_error"]
    assert len(rows) == 40
    for r in rows:
        assert float(r["abs_error"]) == abs(float(r["u"]) - float(r["u_exact"]))
    assert (tmp_path / "trajectory.csv").read_text().startswith("step,t,x,u\n")
    assert "rmse=" in (tmp_path / "summary.txt").read_text()


def test_config_echo_reproduces_run(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert _run(first, "sweep-r", "--r-values", "0.25", "--seeds", "0-1", "--n-steps", "40") == 0
    echo = first / "config.echo"
    cfg, _ = parse_config(["--config", str(echo)])
    assert cfg.r_values == (0.25,) and cfg.seeds == (0, 1) and cfg.command == "sweep-r"
    assert main(["--config", str(echo), "--output", str(second)]) == 0
    assert (first / "sweep_r.csv").read_bytes() == (second / "sweep_r.csv").read_bytes()


def test_echo_round_trips_every_field(tmp_path):
    assert _run(tmp_path, "convergence", "--h-values", "0.0625,0.03125") == 0
    cfg, _ = parse_config(["--config", str(tmp_path / "config.echo")])
    ref = RunConfig(command="convergence", h_values=(0.0625, 0.03125), plots=False, jobs=1, output=str(tmp_path))
    assert cfg == ref


def test_convergence_output(tmp_path):
    assert _run(tmp_path, "convergence") == 0
    rows = list(csv.reader((tmp_path / "convergence.csv").open()))
    assert rows[0] == ["h", "err_ux", "err_uxx"] and len(rows) == 6
    assert "slope ux" in (tmp_path / "summary.txt").read_text()


def test_hard_error_exit_1(tmp_path):
    assert _run(tmp_path, "sweep-r", "--r-values", "0.01", "--seeds", "0", "--n-steps", "5") == 1
    rows = list(csv.reader((tmp_path / "sweep_r.csv").open()))
    assert rows[1][3] == "0"


def test_unwritable_output_exit_1(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["convergence", "--output", str(blocker / "sub"), "--plots", "false"]) == 1


def test_plots_written(tmp_path):
    assert main(["convergence", "--output", str(tmp_path)]) == 0
    assert (tmp_path / "convergence.png").stat().st_size > 0


def test_table1_reduced_run(tmp_path):
    assert _run(tmp_path, "table1", "--seeds", "0", "--n-steps", "30") == 0
    rows = list(csv.reader((tmp_path / "table1.csv").open()))
    assert rows[0] == ["solution", "scheme", "seed", "rmse", "converged"]
    assert sorted({r[0] for r in rows[1:]}) == ["u1", "u2", "u3"]
    assert np.isfinite([float(r[3]) for r in rows[1:]]).all()
