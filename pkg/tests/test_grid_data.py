import numpy as np
import pandas as pd
import pytest

from grid_data import (
    CarbonSeries,
    DuplicateTimestamp,
    GapError,
    GridDataError,
    MalformedRow,
    NegativeIntensity,
    RangeError,
    TimeGrid,
    data_hash,
    linear_to_session,
    parse_carbon_csv,
    pseudo_periodic_series,
    serialize_carbon_csv,
    session_to_linear,
)

HEADER = "timestamp,actual_gco2_per_kwh,forecast_gco2_per_kwh\n"


def test_linear_to_session_known_values():
    assert linear_to_session(1) == (1, 1)
    assert linear_to_session(53) == (2, 5)
    assert session_to_linear(2, 5) == 53
    assert linear_to_session(48) == (1, 48)
    assert linear_to_session(49) == (2, 1)


def test_linear_index_round_trip_over_a_year():
    grid = TimeGrid()
    for l in range(1, 48 * 365 + 1, 7):
        assert grid.session_to_linear(*grid.linear_to_session(l)) == l


def test_linear_index_rejects_zero():
    with pytest.raises(ValueError):
        linear_to_session(0)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(delta_t=0.5, intervals_per_day=24)
    with pytest.raises(ValueError):
        TimeGrid(datum=pd.Timestamp("2022-01-01T00:15Z"))
    with pytest.raises(ValueError):
        TimeGrid(datum=pd.Timestamp("2022-01-01T00:00"))
    grid = TimeGrid(datum=pd.Timestamp("2022-01-01T00:30Z"))
    assert grid.timestamp_of(3) == pd.Timestamp("2022-01-01T01:30Z")


def test_parse_minimal_file():
    data = (HEADER + "2022-01-01T00:00Z,183,190\n2022-01-01T00:30Z,181,188\n").encode()
    series = parse_carbon_csv(data)
    assert len(series) == 2
    assert series.start == pd.Timestamp("2022-01-01T00:00Z")
    np.testing.assert_array_equal(series.actual, [183.0, 181.0])
    np.testing.assert_array_equal(series.one_step_forecast, [190.0, 188.0])


def test_parse_sorts_rows():
    data = (HEADER + "2022-01-01T00:30Z,181,188\n2022-01-01T00:00Z,183,190\n").encode()
    series = parse_carbon_csv(data)
    np.testing.assert_array_equal(series.actual, [183.0, 181.0])


def test_parse_without_forecast_column():
    data = b"timestamp,actual_gco2_per_kwh\n2022-01-01T00:00Z,183\n2022-01-01T00:30Z,181\n"
    assert parse_carbon_csv(data).one_step_forecast is None


def test_gap_is_reported_with_location():
    data = (HEADER + "2022-01-01T00:00Z,183,190\n2022-01-01T01:00Z,181,188\n").encode()
    with pytest.raises(GapError) as info:
        parse_carbon_csv(data)
    assert info.value.location == pd.Timestamp("2022-01-01T00:30Z")
    assert info.value.missing == 1


def test_linear_fill_closes_short_gaps():
    data = (HEADER + "2022-01-01T00:00Z,100,110\n2022-01-01T01:00Z,200,210\n").encode()
    series = parse_carbon_csv(data, fill="linear")
    np.testing.assert_allclose(series.actual, [100.0, 150.0, 200.0])
    np.testing.assert_allclose(series.one_step_forecast, [110.0, 160.0, 210.0])


def test_linear_fill_still_rejects_long_gaps():
    data = (HEADER + "2022-01-01T00:00Z,100,110\n2022-01-01T02:00Z,200,210\n").encode()
    with pytest.raises(GapError) as info:
        parse_carbon_csv(data, fill="linear")
    assert info.value.missing == 3


def test_negative_intensity_rejected():
    data = (HEADER + "2022-01-01T00:00Z,-5,190\n").encode()
    with pytest.raises(NegativeIntensity):
        parse_carbon_csv(data)


def test_duplicate_timestamp_rejected():
    data = (HEADER + "2022-01-01T00:00Z,183,190\n2022-01-01T00:00Z,181,188\n").encode()
    with pytest.raises(DuplicateTimestamp):
        parse_carbon_csv(data)


@pytest.mark.parametrize("row, message", [
    ("2022-01-01T00:00,183,190", "Z suffix"),
    ("2022-01-01T00:10Z,183,190", "half-hour"),
    ("2022-01-01T00:00Z,abc,190", "bad number"),
    ("2022-01-01T00:00Z,,190", "missing actual"),
])
def test_malformed_rows(row, message):
    with pytest.raises(MalformedRow) as info:
        parse_carbon_csv((HEADER + row + "\n").encode())
    assert info.value.row == 2
    assert message in str(info.value)


def test_bad_header():
    with pytest.raises(MalformedRow) as info:
        parse_carbon_csv(b"time,value\n2022-01-01T00:00Z,1\n")
    assert info.value.row == 1


def test_partial_forecast_column_rejected():
    data = (HEADER + "2022-01-01T00:00Z,183,190\n2022-01-01T00:30Z,181,\n").encode()
    with pytest.raises(MalformedRow) as info:
        parse_carbon_csv(data)
    assert info.value.row == 3


def test_serialize_then_parse_gives_same_series():
    series = pseudo_periodic_series(days=3)
    parsed = parse_carbon_csv(serialize_carbon_csv(series), region_name="synthetic")
    assert parsed == series


def test_series_is_immutable():
    series = pseudo_periodic_series(days=1)
    with pytest.raises(ValueError):
        series.actual[0] = 1.0


def test_series_rejects_bad_values():
    start = pd.Timestamp("2022-01-01T00:00Z")
    with pytest.raises(NegativeIntensity):
        CarbonSeries(0, "x", start, [1.0, -1.0])
    with pytest.raises(ValueError):
        CarbonSeries(0, "x", start, [1.0, float("nan")])
    with pytest.raises(ValueError):
        CarbonSeries(0, "x", start, [1.0, 2.0], one_step_forecast=[1.0])


def test_index_window_and_slice():
    series = pseudo_periodic_series(days=2)
    assert series.index_of("2022-01-01T12:00Z") == 24
    assert series.index_of(series.end) == 96
    actual, forecast = series.window(10, 5)
    np.testing.assert_array_equal(actual, series.actual[10:15])
    np.testing.assert_array_equal(forecast, series.one_step_forecast[10:15])
    day_two = series.slice("2022-01-02T00:00Z", "2022-01-03T00:00Z")
    assert len(day_two) == 48
    assert day_two.start == pd.Timestamp("2022-01-02T00:00Z")
    with pytest.raises(RangeError):
        series.window(90, 10)
    with pytest.raises(RangeError):
        series.index_of("2022-01-05T00:00Z")
    with pytest.raises(RangeError):
        series.index_of("2022-01-01T00:10Z")


def test_pseudo_periodic_series_is_deterministic():
    a = pseudo_periodic_series(days=5, seed=3)
    b = pseudo_periodic_series(days=5, seed=3)
    assert a == b
    assert len(a) == 5 * 48
    assert data_hash(a) == data_hash(b)
    assert data_hash(a) != data_hash(pseudo_periodic_series(days=5, seed=4))


def test_pseudo_periodic_series_has_evening_peak():
    series = pseudo_periodic_series(days=60)
    by_hour = series.actual.reshape(-1, 48).mean(axis=0)
    assert np.argmax(by_hour) // 2 in (17, 18, 19)
    assert np.argmin(by_hour) // 2 in (5, 6, 7)


def random_series(rng):
    n = int(rng.integers(1, 200))
    start = pd.Timestamp("2022-01-01T00:00Z") + int(rng.integers(0, 48 * 400)) * pd.Timedelta(minutes=30)
    actual = rng.uniform(0, 500, n)
    if rng.random() < 0.5:
        actual = np.round(actual, 1)
    actual[rng.random(n) < 0.05] = 0.0
    forecast = None if rng.random() < 0.3 else rng.uniform(0, 500, n)
    region_id = int(rng.integers(0, 15))
    return CarbonSeries(region_id, f"r{region_id}", start, actual, forecast)


@pytest.mark.parametrize("seed", range(30))
def test_random_series_survive_csv_round_trip(seed):
    series = random_series(np.random.default_rng(seed))
    parsed = parse_carbon_csv(serialize_carbon_csv(series), series.region_id, series.region_name)
    assert parsed == series


@pytest.mark.parametrize("seed", range(40))
def test_corrupted_files_never_yield_gaps_or_negatives(seed):
    rng = np.random.default_rng(1000 + seed)
    lines = serialize_carbon_csv(random_series(rng)).decode().splitlines()
    header, rows = lines[0], lines[1:]
    for i in sorted(rng.choice(len(rows), size=min(len(rows) - 1, int(rng.integers(0, 4))), replace=False), reverse=True):
        del rows[i]
    for i in rng.choice(len(rows), size=int(rng.integers(0, 2)), replace=False):
        stamp, rest = rows[i].split(",", 1)
        rows[i] = f"{stamp},-{rest}"
    rows = [rows[i] for i in rng.permutation(len(rows))]
    data = "\n".join([header] + rows + [""]).encode()
    kept = sorted(pd.Timestamp(row.split(",", 1)[0]) for row in rows)

    for fill in (None, "linear"):
        try:
            parsed = parse_carbon_csv(data, fill=fill)
        except GridDataError:
            continue
        assert (parsed.actual >= 0).all()
        if parsed.one_step_forecast is not None:
            assert (parsed.one_step_forecast >= 0).all()
        assert parsed.start == kept[0]
        assert parsed.end == kept[-1] + parsed.step
        if fill is None:
            assert len(parsed) == len(kept)
