import io
import logging
import math

import pandas as pd
import pytest

from main import cli_main


@pytest.fixture(autouse=True)
def restore_root_logging():
    """cli_main reconfigures the root logger; put the test runner's handlers back."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def test_help_lists_commands(capsys):
    assert cli_main(["--help"]) == 0
    out = capsys.readouterr().out
    for command in ("simulate", "reproduce", "oracle", "selftest"):
        assert command in out


def test_version(capsys):
    assert cli_main(["--version"]) == 0
    assert "1.0.0" in capsys.readouterr().out


def test_unknown_command_is_usage_error(capsys):
    assert cli_main(["fit"]) == 1
    assert "No such command" in capsys.readouterr().err


def test_invalid_seed_is_usage_error():
    assert cli_main(["simulate", "wb", "--seed", "-1", "--out", "unused"]) == 1


def test_selftest_passes(capsys):
    assert cli_main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "checks passed" in out


# ── simulate ──────────────────────────────────────────────────────────────

def test_simulate_missing_config_is_io_error(tmp_path, capsys):
    missing = tmp_path / "missing.yaml"
    code = cli_main(["simulate", "wb", "--config", str(missing), "--out", str(tmp_path / "out")])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_simulate_without_output_dir_is_parameter_error(capsys):
    assert cli_main(["simulate", "psi"]) == 1
    assert "output" in capsys.readouterr().err


def test_simulate_with_params(tmp_path, capsys):
    out_dir = tmp_path / "psi"
    code = cli_main([
        "simulate", "psi", "--out", str(out_dir), "--seed", "4",
        "--param", "n_firms=2000", "--param", "lambda=2", "--param", "psi=1",
    ])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split("\t")[0] for line in lines] == ["density.csv", "summary.json", "manifest.json"]
    assert (out_dir / "density.csv").exists()
    assert (out_dir / "manifest.json").exists()


def test_simulate_invalid_param_is_parameter_error(tmp_path):
    assert cli_main(["simulate", "psi", "--out", str(tmp_path), "--param", "sigma=-1"]) == 1


def test_simulate_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli_main(["simulate", "psi", "--out", str(blocker), "--param", "n_firms=500"]) == 2


# ── reproduce ─────────────────────────────────────────────────────────────

def test_reproduce_small_left_figure(tmp_path, capsys):
    assert cli_main(["reproduce", "fig1-left", "--out", str(tmp_path), "--firms", "2000", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "size_volatility.csv" in out
    assert (tmp_path / "summary.json").exists()


def test_reproduce_needs_output_dir():
    assert cli_main(["reproduce", "fig1-left"]) == 1


# ── oracle ────────────────────────────────────────────────────────────────

def test_oracle_exponents(capsys):
    assert cli_main(["oracle", "exponents", "--mu", "1.4", "--alpha", "1.2", "--b", "0.1"]) == 0
    frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert list(frame.columns) == ["name", "formula", "value", "boundary", "note"]
    values = dict(zip(frame["name"], frame["value"]))
    assert values["wb_rms_volatility"] == pytest.approx(-0.1)
    assert values["typical_herfindahl"] == pytest.approx(-0.5714, abs=1e-4)
    assert values["simon_phi"] == pytest.approx(2.0 + 0.1 / 0.9)


def test_oracle_exponents_out_of_regime(capsys):
    assert cli_main(["oracle", "exponents", "--mu", "2.5"]) == 1
    assert "REGIME" in capsys.readouterr().err


def test_oracle_partitions_count(capsys):
    assert cli_main(["oracle", "partitions", "--total", "5"]) == 0
    assert capsys.readouterr().out.strip() == "p(5) = 7"


def test_oracle_partitions_list(capsys):
    assert cli_main(["oracle", "partitions", "--total", "4", "--list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["4", "3 1", "2 2", "2 1 1", "1 1 1 1", "p(4) = 5"]


def test_oracle_partitions_list_limit():
    assert cli_main(["oracle", "partitions", "--total", "80", "--list"]) == 1


def test_oracle_density_closed_form(capsys):
    code = cli_main(["oracle", "density", "--psi", "-1", "--lam", "0.5", "--gmin", "-1", "--gmax", "1", "--points", "11"])
    assert code == 0
    frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert list(frame.columns) == ["g", "density"]
    assert len(frame) == 11
    at_zero = frame.loc[frame["g"].abs() < 1e-12, "density"].iloc[0]
    assert at_zero == pytest.approx(0.5 / (2.0 * math.sqrt(2.0)) * 0.5 ** -1.5)


def test_oracle_density_numeric(capsys):
    code = cli_main(["oracle", "density", "--psi", "0.5", "--lam", "1", "--gmin", "0.5", "--gmax", "1.5", "--points", "3"])
    assert code == 0
    frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert len(frame) == 3
    assert frame["density"].is_monotonic_decreasing


def test_oracle_density_needs_a_k_law():
    assert cli_main(["oracle", "density", "--psi", "1"]) == 1
