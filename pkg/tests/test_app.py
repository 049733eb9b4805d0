import pytest
import simplejson as json
from click.testing import CliRunner

from app import cli


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def data_file(runner, tmp_path):
    path = tmp_path / "synthetic.csv"
    result = runner.invoke(cli, ["synth", "--days", "4", "--out", str(path)])
    assert result.exit_code == 0, result.output
    assert "192 synthetic intervals" in result.output
    return path


def test_synth_is_deterministic(runner, tmp_path, data_file):
    again = tmp_path / "again.csv"
    runner.invoke(cli, ["synth", "--days", "4", "--out", str(again)])
    assert again.read_bytes() == data_file.read_bytes()
    assert data_file.read_text().startswith("timestamp,actual_gco2_per_kwh,forecast_gco2_per_kwh\n")


def test_simulate_writes_identical_outputs(runner, tmp_path, data_file):
    outputs = []
    for i in range(2):
        out, steps = tmp_path / f"run{i}.json", tmp_path / f"steps{i}.csv"
        result = runner.invoke(cli, [
            "simulate", "--data", str(data_file), "--strategy", "mpc", "--horizon", "2",
            "--from", "2022-01-01T00:00Z", "--to", "2022-01-03T00:00Z", "--seed", "1",
            "--out", str(out), "--log-csv", str(steps),
        ])
        assert result.exit_code == 0, result.output
        assert result.output.startswith("mpc2: c_ev = ")
        outputs.append((out.read_bytes(), steps.read_bytes()))
    assert outputs[0] == outputs[1]

    payload = json.loads(outputs[0][0])
    assert payload["config"]["horizon"] == 2
    assert payload["config"]["seed"] == 1
    assert payload["totals"]["energy_charged"] > 0
    assert len(outputs[0][1].decode().splitlines()) == 2 * 48 + 1


def test_global_flags_reach_the_scenario(runner, tmp_path, data_file):
    out = tmp_path / "run.json"
    result = runner.invoke(cli, [
        "--lambda", "0", "--perfect-forecast", "--morning-floor", "60",
        "simulate", "--data", str(data_file), "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    scenario = json.loads(out.read_text())["config"]
    assert scenario["forecast"]["lambda"] == 0.0
    assert scenario["perfect_forecast"] is True
    assert scenario["morning_floor"] == 60.0


def test_scenario_file_is_read(runner, tmp_path, data_file):
    scenario = tmp_path / "scenario.env"
    scenario.write_text("strategy=uncontrolled\nfrom=2022-01-02T00:00Z\nto=2022-01-03T00:00Z\n")
    out = tmp_path / "run.json"
    result = runner.invoke(cli, ["--config", str(scenario), "simulate", "--data", str(data_file), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert result.output.startswith("uncontrolled:")
    assert json.loads(out.read_text())["config"]["start"].startswith("2022-01-02")


def test_domain_errors_become_clean_failures(runner, tmp_path, data_file):
    out = tmp_path / "run.json"
    result = runner.invoke(cli, [
        "simulate", "--data", str(data_file), "--from", "2021-06-01T00:00Z", "--to", "2021-06-02T00:00Z",
        "--out", str(out),
    ])
    assert result.exit_code == 1
    assert "RangeError" in result.output
    assert not out.exists()

    result = runner.invoke(cli, ["--morning-floor", "95", "simulate", "--data", str(data_file), "--out", str(out)])
    assert result.exit_code == 1
    assert "invalid configuration" in result.output


def test_table1_reports_every_strategy(runner, tmp_path, data_file):
    out, csv = tmp_path / "table.json", tmp_path / "table.csv"
    result = runner.invoke(cli, [
        "--workers", "1", "table1", "--data", str(data_file), "--horizons", "1,2", "--seeds", "0",
        "--from", "2022-01-01T00:00Z", "--to", "2022-01-03T00:00Z", "--out", str(out), "--csv", str(csv),
    ])
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert [row["strategy"] for row in report["rows"]] == ["uncontrolled", "mpc1", "mpc2"]
    assert csv.read_text().count("\n") == 4


def test_benchmark_is_byte_identical(runner, tmp_path):
    outputs = []
    for i in range(2):
        out = tmp_path / f"bench{i}.json"
        result = runner.invoke(cli, ["--workers", "1", "benchmark", "--days", "4", "--out", str(out)])
        assert result.exit_code == 0, result.output
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    assert set(json.loads(outputs[0])["summary"]["pct_reduction"]) == {"uncontrolled", "mpc1", "mpc4"}


def test_trace_writes_long_form_rows(runner, tmp_path, data_file):
    out = tmp_path / "trace.csv"
    args = ["--perfect-forecast", "trace", "--data", str(data_file), "--from", "2022-01-01T00:00Z",
            "--days", "2", "--horizons", "1,2", "--out", str(out)]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    assert "uncontrolled:" in result.output and "mpc2:" in result.output
    lines = out.read_text().splitlines()
    assert lines[0] == "timestamp,strategy,soc,power,actual_intensity,cumulative_emissions"
    assert len(lines) == 3 * 2 * 48 + 1

    first = out.read_bytes()
    runner.invoke(cli, args)
    assert out.read_bytes() == first
