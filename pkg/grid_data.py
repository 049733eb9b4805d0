import io
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%MZ"
CSV_COLUMNS = ["timestamp", "actual_gco2_per_kwh", "forecast_gco2_per_kwh"]


class GridDataError(ValueError):
    """Base class for carbon-intensity data errors."""


class MalformedRow(GridDataError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class DuplicateTimestamp(GridDataError):
    def __init__(self, timestamp: pd.Timestamp):
        self.timestamp = timestamp
        super().__init__(f"duplicate timestamp {timestamp.strftime(TIMESTAMP_FORMAT)}")


class GapError(GridDataError):
    def __init__(self, location: pd.Timestamp, missing: int = 1):
        self.location = location
        self.missing = missing
        super().__init__(
            f"missing {missing} interval(s) starting at {location.strftime(TIMESTAMP_FORMAT)}"
        )


class NegativeIntensity(GridDataError):
    def __init__(self, location, value: float):
        self.location = location
        self.value = value
        super().__init__(f"negative intensity {value} at {location}")


class RangeError(GridDataError):
    """Requested window is not covered by the series."""


@dataclass(frozen=True)
class TimeGrid:
    """Half-hourly time grid with the (day, interval) double index.

    Linear interval indices ``l`` are 1-based; ``l = c*(s-1) + k`` with
    ``1 <= k <= c``.
    """

    delta_t: float = 0.5
    intervals_per_day: int = 48
    datum: Optional[pd.Timestamp] = None

    def __post_init__(self):
        if self.delta_t <= 0 or self.intervals_per_day < 1:
            raise ValueError("delta_t and intervals_per_day must be positive")
        if abs(self.intervals_per_day * self.delta_t - 24.0) > 1e-12:
            raise ValueError(
                f"intervals_per_day x delta_t must equal 24 h, got {self.intervals_per_day * self.delta_t}"
            )
        if self.datum is not None:
            datum = pd.Timestamp(self.datum)
            if datum.tzinfo is None:
                raise ValueError("datum must be timezone-aware UTC")
            datum = datum.tz_convert("UTC")
            seconds_into_day = datum.hour * 3600 + datum.minute * 60 + datum.second
            step_seconds = int(round(self.delta_t * 3600))
            if datum.microsecond or datum.nanosecond or seconds_into_day % step_seconds:
                raise ValueError(f"datum {datum} is not aligned to the {self.delta_t} h grid")
            object.__setattr__(self, "datum", datum)

    @property
    def step(self) -> pd.Timedelta:
        return pd.Timedelta(hours=self.delta_t)

    def linear_to_session(self, l: int) -> Tuple[int, int]:
        if l < 1:
            raise ValueError(f"interval index must be >= 1, got {l}")
        s, k = divmod(l - 1, self.intervals_per_day)
        return s + 1, k + 1

    def session_to_linear(self, s: int, k: int) -> int:
        if s < 1 or not 1 <= k <= self.intervals_per_day:
            raise ValueError(f"invalid (s, k) = ({s}, {k})")
        return self.intervals_per_day * (s - 1) + k

    def timestamp_of(self, l: int) -> pd.Timestamp:
        """Start time of linear interval ``l`` (requires a datum)."""
        if self.datum is None:
            raise ValueError("grid has no datum")
        if l < 1:
            raise ValueError(f"interval index must be >= 1, got {l}")
        return self.datum + (l - 1) * self.step


def linear_to_session(l: int, grid: TimeGrid = TimeGrid()) -> Tuple[int, int]:
    return grid.linear_to_session(l)


def session_to_linear(s: int, k: int, grid: TimeGrid = TimeGrid()) -> int:
    return grid.session_to_linear(s, k)


def _readonly(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class CarbonSeries:
    """Gap-free half-hourly carbon intensity for one region (gCO2e/kWh)."""

    region_id: int
    region_name: str
    start: pd.Timestamp
    actual: np.ndarray
    one_step_forecast: Optional[np.ndarray] = None
    delta_t: float = 0.5

    def __post_init__(self):
        start = pd.Timestamp(self.start)
        if start.tzinfo is None:
            raise ValueError("series start must be timezone-aware UTC")
        object.__setattr__(self, "start", start.tz_convert("UTC"))
        # Validates alignment
        TimeGrid(self.delta_t, int(round(24 / self.delta_t)), self.start)

        actual = _readonly(self.actual)
        if actual.ndim != 1:
            raise ValueError("actual must be one-dimensional")
        _check_intensities(actual, self.start, self.step)
        object.__setattr__(self, "actual", actual)

        if self.one_step_forecast is not None:
            forecast = _readonly(self.one_step_forecast)
            if forecast.shape != actual.shape:
                raise ValueError("one_step_forecast must have the same length as actual")
            _check_intensities(forecast, self.start, self.step)
            object.__setattr__(self, "one_step_forecast", forecast)

    def __len__(self) -> int:
        return len(self.actual)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CarbonSeries):
            return NotImplemented
        if (self.region_id, self.region_name, self.start, self.delta_t) != (
            other.region_id, other.region_name, other.start, other.delta_t
        ):
            return False
        if not np.array_equal(self.actual, other.actual):
            return False
        if (self.one_step_forecast is None) != (other.one_step_forecast is None):
            return False
        if self.one_step_forecast is not None:
            return np.array_equal(self.one_step_forecast, other.one_step_forecast)
        return True

    __hash__ = None

    @property
    def step(self) -> pd.Timedelta:
        return pd.Timedelta(hours=self.delta_t)

    @property
    def end(self) -> pd.Timestamp:
        """Exclusive end timestamp."""
        return self.start + len(self) * self.step

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=len(self), freq=self.step)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.delta_t, int(round(24 / self.delta_t)), self.start)

    def index_of(self, timestamp) -> int:
        """0-based position of the interval starting at ``timestamp``.

        ``self.end`` maps to ``len(self)`` so it can be used as an exclusive bound.
        """
        timestamp = as_utc(timestamp)
        offset = (timestamp - self.start) / self.step
        if offset != int(offset):
            raise RangeError(f"{timestamp} is not aligned to the series grid")
        index = int(offset)
        if not 0 <= index <= len(self):
            raise RangeError(
                f"{timestamp} outside series coverage [{self.start}, {self.end})"
            )
        return index

    def window(self, start_index: int, length: int) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """Actual and one-step forecast values for positions [start_index, start_index + length)."""
        if length < 1 or start_index < 0 or start_index + length > len(self):
            raise RangeError(
                f"window [{start_index}, {start_index + length}) outside series of length {len(self)}"
            )
        stop = start_index + length
        forecast = None if self.one_step_forecast is None else self.one_step_forecast[start_index:stop]
        return self.actual[start_index:stop], forecast

    def slice(self, start, end) -> "CarbonSeries":
        a, b = self.index_of(start), self.index_of(end)
        if b <= a:
            raise RangeError("empty slice")
        forecast = None if self.one_step_forecast is None else self.one_step_forecast[a:b]
        return CarbonSeries(
            self.region_id, self.region_name, self.start + a * self.step,
            self.actual[a:b], forecast, self.delta_t,
        )


def as_utc(timestamp) -> pd.Timestamp:
    timestamp = pd.Timestamp(timestamp)
    if timestamp.tzinfo is None:
        return timestamp.tz_localize("UTC")
    return timestamp.tz_convert("UTC")


def _check_intensities(values: np.ndarray, start: pd.Timestamp, step: pd.Timedelta) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise GridDataError(f"non-finite intensity at {start + i * step}")
    negative = values < 0
    if negative.any():
        i = int(np.flatnonzero(negative)[0])
        raise NegativeIntensity(start + i * step, float(values[i]))


def fill_gaps(frame: pd.DataFrame, step: pd.Timedelta, max_gap: int = 2) -> pd.DataFrame:
    """Linearly interpolate runs of at most ``max_gap`` missing intervals.

    ``frame`` is indexed by timestamp; longer runs still raise GapError.
    """
    full_index = pd.date_range(frame.index[0], frame.index[-1], freq=step)
    filled = frame.reindex(full_index)
    missing = filled["actual"].isna().to_numpy()
    if missing.any():
        # Run lengths of consecutive missing rows
        run_start = None
        for i, is_missing in enumerate(np.append(missing, False)):
            if is_missing and run_start is None:
                run_start = i
            elif not is_missing and run_start is not None:
                run = i - run_start
                if run > max_gap:
                    raise GapError(full_index[run_start], run)
                run_start = None
        logger.info(f"Interpolating {int(missing.sum())} missing interval(s)")
        filled = filled.interpolate(method="linear", limit_area="inside")
    return filled


def series_from_frame(
    frame: pd.DataFrame,
    region_id: int = 0,
    region_name: str = "national",
    delta_t: float = 0.5,
    fill: Optional[str] = None,
) -> CarbonSeries:
    """Build a validated series from a frame with ``timestamp``, ``actual``
    and optional ``forecast`` columns (timestamps already UTC)."""
    if frame.empty:
        raise MalformedRow(0, "no data rows")
    frame = frame.sort_values("timestamp", kind="stable")
    duplicated = frame["timestamp"].duplicated()
    if duplicated.any():
        raise DuplicateTimestamp(frame.loc[duplicated, "timestamp"].iloc[0])

    negative = frame["actual"] < 0
    if "forecast" in frame:
        negative |= frame["forecast"] < 0
    if negative.any():
        row = frame.loc[negative].iloc[0]
        value = row["actual"] if row["actual"] < 0 else row["forecast"]
        raise NegativeIntensity(row["timestamp"].strftime(TIMESTAMP_FORMAT), float(value))

    step = pd.Timedelta(hours=delta_t)
    indexed = frame.set_index("timestamp")
    diffs = indexed.index.to_series().diff().iloc[1:]
    gaps = diffs[diffs != step]
    if len(gaps):
        if fill == "linear":
            indexed = fill_gaps(indexed, step)
        elif fill is not None:
            raise ValueError(f"unknown fill mode {fill!r}")
        else:
            after = gaps.index[0]
            missing = int(gaps.iloc[0] / step) - 1
            raise GapError(after - gaps.iloc[0] + step, missing)

    forecast = None
    if "forecast" in indexed and indexed["forecast"].notna().any():
        forecast = indexed["forecast"].to_numpy(dtype=float)
    return CarbonSeries(
        region_id=region_id,
        region_name=region_name,
        start=indexed.index[0],
        actual=indexed["actual"].to_numpy(dtype=float),
        one_step_forecast=forecast,
        delta_t=delta_t,
    )


def parse_carbon_csv(
    data: bytes,
    region_id: int = 0,
    region_name: str = "national",
    fill: Optional[str] = None,
) -> CarbonSeries:
    """Parse the canonical CSV format into a validated CarbonSeries.

    Args:
        data: Raw CSV bytes with header
            ``timestamp,actual_gco2_per_kwh[,forecast_gco2_per_kwh]``.
        region_id: Region the rows belong to.
        region_name: Display name of the region.
        fill: ``None`` to reject gaps, ``"linear"`` to interpolate gaps of
            at most two intervals.

    Returns:
        CarbonSeries sorted by timestamp.
    """
    try:
        raw = pd.read_csv(io.BytesIO(data), dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise MalformedRow(1, f"unreadable CSV: {e}")

    columns = [c.strip() for c in raw.columns]
    raw.columns = columns
    if columns[:2] != CSV_COLUMNS[:2] or len(columns) > 3 or (
        len(columns) == 3 and columns[2] != CSV_COLUMNS[2]
    ):
        raise MalformedRow(1, f"unexpected header {','.join(columns)}")

    rows = []
    has_forecast = len(columns) == 3
    forecast_seen = []
    for i, record in enumerate(raw.itertuples(index=False)):
        line = i + 2
        text = record[0].strip()
        if not text.endswith("Z"):
            raise MalformedRow(line, f"timestamp {text!r} must be ISO-8601 UTC with Z suffix")
        try:
            timestamp = pd.Timestamp(text)
        except ValueError:
            raise MalformedRow(line, f"bad timestamp {text!r}")
        if timestamp.second or timestamp.microsecond or timestamp.minute % 30:
            raise MalformedRow(line, f"timestamp {text!r} is not on the half-hour grid")
        actual = _parse_number(record[1], line)
        if actual is None:
            raise MalformedRow(line, "missing actual intensity")
        forecast = _parse_number(record[2], line) if has_forecast else None
        forecast_seen.append(forecast is not None)
        rows.append((timestamp.tz_convert("UTC"), actual, np.nan if forecast is None else forecast))

    if has_forecast and any(forecast_seen) and not all(forecast_seen):
        line = forecast_seen.index(False) + 2
        raise MalformedRow(line, "missing forecast intensity")

    frame = pd.DataFrame(rows, columns=["timestamp", "actual", "forecast"])
    if not any(forecast_seen):
        frame = frame.drop(columns="forecast")
    return series_from_frame(frame, region_id, region_name, fill=fill)


def _parse_number(text: str, line: int) -> Optional[float]:
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(line, f"bad number {text!r}")
    if not np.isfinite(value):
        raise MalformedRow(line, f"non-finite number {text!r}")
    return value


def serialize_carbon_csv(series: CarbonSeries) -> bytes:
    """Write the canonical CSV (inverse of parse_carbon_csv)."""
    frame = pd.DataFrame({
        "timestamp": series.timestamps.strftime(TIMESTAMP_FORMAT),
        "actual_gco2_per_kwh": series.actual,
    })
    if series.one_step_forecast is not None:
        frame["forecast_gco2_per_kwh"] = series.one_step_forecast
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


def data_hash(series: CarbonSeries) -> str:
    digest = hashlib.sha256()
    digest.update(f"{series.region_id}:{series.region_name}\n".encode("utf-8"))
    digest.update(serialize_carbon_csv(series))
    return digest.hexdigest()


def pseudo_periodic_series(
    days: int = 365,
    seed: int = 7,
    start: str = "2022-01-01T00:00Z",
    base: float = 200.0,
    daily_amplitude: float = 0.4,
    modulation_amplitude: float = 0.45,
    modulation_period_days: float = 5.0,
    noise: float = 0.03,
    forecast_error: float = 0.02,
) -> CarbonSeries:
    """Synthetic carbon-intensity signal with daily and multi-day structure.

    A daily cosine peaking at 18:00 UTC is scaled by a smooth multi-day
    modulation (one main sinusoid plus two random-phase harmonics), with a
    little multiplicative noise. The one-step forecast carries a small
    Gaussian relative error.
    """
    rng = np.random.default_rng(seed)
    n = days * 48
    hours = np.arange(n) * 0.5
    t_days = hours / 24.0

    daily = 1.0 + daily_amplitude * np.cos(2 * np.pi * (hours % 24 - 18.0) / 24.0)
    phases = rng.uniform(0, 2 * np.pi, size=3)
    modulation = (
        1.0
        + modulation_amplitude * np.sin(2 * np.pi * t_days / modulation_period_days + phases[0])
        + 0.1 * np.sin(2 * np.pi * t_days / 2.3 + phases[1])
        + 0.1 * np.sin(2 * np.pi * t_days / 11.7 + phases[2])
    )
    modulation = np.clip(modulation, 0.1, None)
    actual = base * daily * modulation * (1.0 + noise * rng.standard_normal(n))
    actual = np.round(np.clip(actual, 1.0, None), 2)
    forecast = np.round(actual * (1.0 + forecast_error * rng.standard_normal(n)), 2)
    forecast = np.clip(forecast, 0.0, None)
    return CarbonSeries(
        region_id=0,
        region_name="synthetic",
        start=pd.Timestamp(start),
        actual=actual,
        one_step_forecast=forecast,
    )
