from datetime import date, time

import numpy as np
import pandas as pd
import pytest
import simplejson as json

from behavior import BehaviorModel, FixedSchedule
from conftest import make_series
from grid_data import RangeError, pseudo_periodic_series
from sim import EmptyLog, LOG_COLUMNS, ScenarioConfig, compute_metrics, result_to_dict, run, write_step_log

LATE_HOUR = FixedSchedule(plug_in=time(23, 0), duration_h=1.0, demand_kwh=5.0)


def toy_config(strategy="mpc", horizon=1, **updates):
    values = dict(
        strategy=strategy,
        horizon=horizon,
        behavior=LATE_HOUR,
        start="2022-01-01T00:00Z",
        end="2022-01-03T00:00Z",
        initial_soc=60.0,
        morning_floor=60.0,
        perfect_forecast=True,
    )
    values.update(updates)
    return ScenarioConfig(**values)


def test_two_night_lookahead_beats_single_night(toy_series):
    two = run(toy_config(horizon=2), toy_series)
    one = run(toy_config(horizon=1), toy_series)
    uncontrolled = run(toy_config(strategy="uncontrolled"), toy_series)

    assert two.totals.emissions == pytest.approx(925.0)
    assert one.totals.emissions == pytest.approx(1450.0)
    assert uncontrolled.totals.emissions == pytest.approx(3025.0)
    assert two.totals.energy_charged == pytest.approx(10.0)
    assert uncontrolled.totals.energy_charged == pytest.approx(20.0)

    assert two.totals.c_ev == pytest.approx(92.5)
    assert one.totals.c_ev == pytest.approx(145.0)
    assert uncontrolled.totals.c_ev == pytest.approx(151.25)
    assert 1 - two.totals.c_ev / one.totals.c_ev == pytest.approx(0.362, abs=1e-3)

    assert two.final_soc == pytest.approx(60.0)
    assert two.consumption_applied == pytest.approx(10.0)
    assert two.events == [] and one.events == []


def test_step_log_layout(toy_series):
    result = run(toy_config(horizon=2), toy_series)
    log = result.log
    assert len(log) == 96
    assert list(log.columns) == LOG_COLUMNS
    assert log["plugged"].sum() == 4
    np.testing.assert_allclose(log["power"].iloc[46:48], [10.0, 10.0])
    assert log["session"].iloc[46] == "2022-01-01"
    assert log["session"].iloc[94] == "2022-01-02"
    assert log["session"].iloc[0] == ""
    assert list(result.totals.per_session.index) == ["2022-01-01", "2022-01-02"]
    assert result.totals.per_session.loc["2022-01-01", "emissions"] == pytest.approx(925.0)


def test_constant_signal_gives_equal_intensity_for_every_strategy():
    series = make_series(np.full(6 * 48, 300.0), np.full(6 * 48, 310.0))
    common = dict(start="2022-01-01T00:00Z", end="2022-01-05T00:00Z", behavior=BehaviorModel(seed=1))
    for strategy, horizon in [("uncontrolled", 1), ("mpc", 1), ("mpc", 2)]:
        result = run(ScenarioConfig(strategy=strategy, horizon=horizon, **common), series)
        assert result.totals.c_ev == pytest.approx(300.0)


@pytest.mark.parametrize("strategy, horizon", [("uncontrolled", 1), ("mpc", 1), ("mpc", 3)])
def test_energy_balance(strategy, horizon):
    series = pseudo_periodic_series(days=12)
    config = ScenarioConfig(
        strategy=strategy, horizon=horizon, start="2022-01-02T00:00Z", end="2022-01-08T00:00Z",
        behavior=BehaviorModel(seed=5),
    )
    result = run(config, series)
    scale = config.battery.kwh_per_point
    expected = result.initial_soc + (result.totals.energy_charged - result.consumption_applied) / scale
    assert result.final_soc == pytest.approx(expected, abs=1e-6)
    assert result.log["soc"].between(config.battery.soc_min - 1e-9, config.battery.soc_max + 1e-9).all()
    assert (result.log.loc[~result.log["plugged"], "power"] == 0).all()


def test_runs_are_reproducible():
    series = pseudo_periodic_series(days=6)
    config = ScenarioConfig(horizon=2, start="2022-01-01T00:00Z", end="2022-01-04T00:00Z", seed=3)
    a, b = run(config, series), run(config, series)
    pd.testing.assert_frame_equal(a.log, b.log)
    assert a.events == b.events
    assert a.totals.to_dict() == b.totals.to_dict()


def test_seed_changes_realizations():
    series = pseudo_periodic_series(days=6)
    common = dict(horizon=1, start="2022-01-01T00:00Z", end="2022-01-04T00:00Z")
    a = run(ScenarioConfig(seed=1, **common), series)
    b = run(ScenarioConfig(seed=2, **common), series)
    assert a.consumption_applied != b.consumption_applied


def test_fixed_schedule_with_perfect_forecast_meets_every_floor():
    series = pseudo_periodic_series(days=12)
    fixed = FixedSchedule(plug_in=time(18, 0), duration_h=15, demand_kwh=5.0)
    for strategy, horizon in [("uncontrolled", 1), ("mpc", 1), ("mpc", 4)]:
        config = ScenarioConfig(
            strategy=strategy, horizon=horizon, behavior=fixed, perfect_forecast=True,
            start="2022-01-01T00:00Z", end="2022-01-08T00:00Z",
        )
        result = run(config, series)
        assert result.events == []
        assert result.shortfalls == 0


def test_session_resolve_matches_step_resolve_with_perfect_forecast():
    series = pseudo_periodic_series(days=8)
    common = dict(
        horizon=1, behavior=FixedSchedule(), perfect_forecast=True,
        start="2022-01-01T00:00Z", end="2022-01-06T00:00Z",
    )
    step = run(ScenarioConfig(resolve="step", **common), series)
    session = run(ScenarioConfig(resolve="session", **common), series)
    assert session.totals.emissions == pytest.approx(step.totals.emissions, rel=1e-9)


def test_unreachable_floor_is_relaxed_and_reported(toy_series):
    heavy = FixedSchedule(plug_in=time(23, 0), duration_h=1.0, demand_kwh=20.0)
    result = run(toy_config(behavior=heavy, initial_soc=50.0, morning_floor=70.0), toy_series)
    kinds = {event.kind for event in result.events}
    assert kinds == {"infeasible", "consumption_shortfall", "morning_shortfall"}
    assert result.shortfalls >= 3
    assert result.consumption_applied == pytest.approx(15.0 + 10.0)
    assert result.log["soc"].min() >= 20.0


def test_floor_override_applies_to_one_night(toy_series):
    result = run(toy_config(horizon=1, floor_overrides={date(2022, 1, 1): 70.0}), toy_series)
    assert result.log["soc"].iloc[47] == pytest.approx(70.0)
    assert result.events == []


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(start="2022-01-02T00:00Z", end="2022-01-01T00:00Z")
    with pytest.raises(ValueError):
        ScenarioConfig(start="2022-01-01T00:00Z", end="2022-01-02T00:00Z", morning_floor=90.0)
    with pytest.raises(ValueError):
        ScenarioConfig(start="2022-01-01T00:00Z", end="2022-01-02T00:00Z", horizon=0)


def test_seed_overrides_behavior_and_forecast_seeds():
    config = ScenarioConfig(start="2022-01-01", end="2022-01-02", seed=3, horizon=4)
    assert config.effective_behavior().seed == 3
    assert config.effective_forecast().sign_seed == 3
    assert config.label == "mpc4"
    assert ScenarioConfig(start="2022-01-01", end="2022-01-02", strategy="uncontrolled").label == "uncontrolled"


def test_range_outside_series(toy_series):
    with pytest.raises(RangeError):
        run(toy_config(start="2021-12-31T00:00Z"), toy_series)


@pytest.mark.parametrize("strategy, horizon", [("uncontrolled", 1), ("mpc", 1), ("mpc", 2)])
def test_cumulative_emissions_end_at_the_total(tmp_path, toy_series, strategy, horizon):
    result = run(toy_config(strategy, horizon), toy_series)
    assert result.log["cumulative_emissions"].iloc[-1] == pytest.approx(result.totals.emissions)
    assert result.log["cumulative_emissions"].is_monotonic_increasing

    path = tmp_path / "steps.csv"
    write_step_log(result, str(path))
    written = pd.read_csv(path)
    assert written["cumulative_emissions"].iloc[-1] == pytest.approx(result.totals.emissions)


def test_compute_metrics_known_values():
    stamp = pd.date_range("2022-01-01T00:00Z", periods=2, freq="30min")
    log = pd.DataFrame({
        "timestamp": stamp, "power": [10.0, 0.0], "actual_intensity": [200.0, 500.0], "session": ["a", "a"],
    })
    totals = compute_metrics(log)
    assert totals.energy_charged == 5.0
    assert totals.emissions == 1000.0
    assert totals.c_ev == 200.0
    assert totals.cumulative_emissions.iloc[-1] == 1000.0

    idle = compute_metrics(log.assign(power=0.0))
    assert idle.energy_charged == 0.0
    assert idle.c_ev is None

    with pytest.raises(EmptyLog):
        compute_metrics(log.iloc[:0])


def test_write_step_log_and_json(tmp_path, toy_series):
    result = run(toy_config(horizon=2), toy_series)
    path = tmp_path / "steps.csv"
    write_step_log(result, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(LOG_COLUMNS)
    assert len(lines) == 97
    assert lines[1].startswith("2022-01-01T00:00Z,False,0.0,")

    payload = json.loads(json.dumps(result_to_dict(result)))
    assert payload["totals"]["emissions"] == pytest.approx(925.0)
    assert payload["totals"]["shortfalls"] == 0
    assert payload["region"]["name"] == "toy"
    assert payload["config"]["horizon"] == 2
