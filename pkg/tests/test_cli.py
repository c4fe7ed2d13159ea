import json

import pytest
from click.testing import CliRunner

from vsc_impedance import __version__
from vsc_impedance.cli import cli
from vsc_impedance.config_loader import dump_run_config, load_run_config
from vsc_impedance.curve_io import read_curve_csv


@pytest.fixture
def runner():
    return CliRunner()


def test_version_prints_conventions(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output
    assert "amplitude-invariant" in result.output


def test_sweep_reduced(runner, tmp_path):
    out = tmp_path / "z.csv"
    result = runner.invoke(cli, ["sweep-reduced", "--config", "fig5", "--grid", "10,2000,25",
                                 "--out", str(out)])
    assert result.exit_code == 0, result.output
    curve = read_curve_csv(out)
    assert len(curve) == 25
    assert abs(curve.values[0]) == pytest.approx(97.0, abs=2.0)


def test_sweep_analytic_with_svg(runner, tmp_path):
    out, svg = tmp_path / "z.csv", tmp_path / "z.svg"
    result = runner.invoke(cli, ["sweep-analytic", "--config", "fig6", "--grid", "10,2000,30",
                                 "--out", str(out), "--svg", str(svg)])
    assert result.exit_code == 0, result.output
    assert svg.read_text().lstrip().startswith("<?xml")


def test_invalid_config_exits_with_2(runner, tmp_path):
    data = dump_run_config(load_run_config("fig5"))
    del data["design"]["v_dc_nominal"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(data))
    result = runner.invoke(cli, ["sweep-analytic", "--config", str(path), "--grid", "10,100,5",
                                 "--out", str(tmp_path / "z.csv")])
    assert result.exit_code == 2
    assert "design.v_dc_nominal" in result.output
    assert not (tmp_path / "z.csv").exists()


def test_bad_grid_is_a_usage_error(runner, tmp_path):
    result = runner.invoke(cli, ["sweep-reduced", "--config", "fig5", "--grid", "10,100",
                                 "--out", str(tmp_path / "z.csv")])
    assert result.exit_code == 2


def test_zero_jobs_rejected(runner, tmp_path):
    result = runner.invoke(cli, ["--jobs", "0", "sweep-reduced", "--config", "fig5",
                                 "--grid", "10,100,5", "--out", str(tmp_path / "z.csv")])
    assert result.exit_code == 2


def test_stability_with_builtin_source(runner, tmp_path):
    load = tmp_path / "load.csv"
    report = tmp_path / "report.txt"
    assert runner.invoke(cli, ["sweep-reduced", "--config", "fig5", "--grid", "10,2000,100",
                               "--out", str(load)]).exit_code == 0
    result = runner.invoke(cli, ["stability", "--source", "builtin:R:r=0.1", "--load", str(load),
                                 "--report", str(report)])
    assert result.exit_code == 0, result.output
    assert "Stable" in result.output
    assert report.read_text().startswith("verdict: Stable")


def test_stability_unknown_builtin(runner, tmp_path):
    load = tmp_path / "load.csv"
    runner.invoke(cli, ["sweep-reduced", "--config", "fig5", "--grid", "10,2000,10", "--out", str(load)])
    result = runner.invoke(cli, ["stability", "--source", "builtin:LC:l=1", "--load", str(load),
                                 "--report", str(tmp_path / "r.txt")])
    assert result.exit_code == 2


def test_process_capture_of_simulated_trace(runner, tmp_path):
    trace = tmp_path / "trace.csv"
    result = runner.invoke(cli, ["simulate", "--config", "fig7", "--duration", "0.03",
                                 "--out", str(trace), "--freq", "500"])
    assert result.exit_code == 0, result.output
    result = runner.invoke(cli, ["process-capture", "--capture", str(trace), "--freq", "500"])
    assert result.exit_code == 0, result.output
    assert result.output.startswith("500 Hz: |Z| =")


def test_scenarios_without_simulation(runner, tmp_path):
    result = runner.invoke(cli, ["scenarios", "--suite", "powers", "--no-fra",
                                 "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "summary.txt").exists()
