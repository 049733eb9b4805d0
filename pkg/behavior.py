"""Driver behavior: plug-in/plug-out times and daily consumption.

Times of day are handled as minutes after midnight (UTC) of the day the
vehicle is plugged in; a plug-out at or before the plug-in time of day
falls on the next day.
"""
import logging
import math
from dataclasses import dataclass
from datetime import time
from typing import Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import norm

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 24 * 60
EPOCH = pd.Timestamp("1970-01-01", tz="UTC")
MAX_REDRAWS = 1000


class BehaviorError(ValueError):
    """Base class for behavior model errors."""


class EmptyWindow(BehaviorError):
    pass


def _minutes(value: time) -> float:
    return value.hour * 60 + value.minute + value.second / 60.0


def _time_of_day(minutes: float) -> time:
    minutes = minutes % MINUTES_PER_DAY
    whole = int(math.floor(minutes + 1e-9))
    seconds = int(round((minutes - whole) * 60))
    if seconds == 60:
        whole, seconds = whole + 1, 0
    whole %= MINUTES_PER_DAY
    return time(whole // 60, whole % 60, seconds)


def day_index_of(date) -> int:
    """Days since 1970-01-01 for a date or timestamp (UTC)."""
    stamp = pd.Timestamp(date)
    stamp = stamp.tz_localize("UTC") if stamp.tzinfo is None else stamp.tz_convert("UTC")
    return int((stamp.normalize() - EPOCH) / pd.Timedelta(days=1))


def midnight_of(day_index: int) -> pd.Timestamp:
    return EPOCH + pd.Timedelta(days=day_index)


@dataclass(frozen=True)
class PlannedWindow:
    """Planned plug-in window in minutes after the plug-in day's midnight."""

    start_minutes: float
    end_minutes: float

    @property
    def start_time(self) -> time:
        return _time_of_day(self.start_minutes)

    @property
    def end_time(self) -> time:
        return _time_of_day(self.end_minutes)

    @property
    def hours(self) -> float:
        return (self.end_minutes - self.start_minutes) / 60.0

    def bounds(self, day_index: int) -> Tuple[pd.Timestamp, pd.Timestamp]:
        midnight = midnight_of(day_index)
        return (
            midnight + pd.Timedelta(minutes=self.start_minutes),
            midnight + pd.Timedelta(minutes=self.end_minutes),
        )


@dataclass(frozen=True)
class SessionRealization:
    plug_in: pd.Timestamp
    plug_out: pd.Timestamp
    day_energy: float

    def __post_init__(self):
        if self.plug_out <= self.plug_in:
            raise ValueError("plug_out must be after plug_in")
        if self.day_energy < 0:
            raise ValueError("day_energy must be non-negative")


def quantize_window(start_minutes: float, end_minutes: float, delta_t: float = 0.5) -> PlannedWindow:
    """Shrink a window to grid boundaries: start rounded up, end rounded down."""
    step = delta_t * 60.0
    start = math.ceil(start_minutes / step - 1e-9) * step
    end = math.floor(end_minutes / step + 1e-9) * step
    if end <= start:
        raise EmptyWindow(
            f"planned window {_time_of_day(start)}-{_time_of_day(end)} is empty on the {delta_t} h grid"
        )
    return PlannedWindow(start, end)


class BehaviorModel(BaseModel):
    """Normal plug-time and consumption models with percentile planning values."""

    model_config = ConfigDict(frozen=True)

    plugin_mean: time = time(18, 0)
    plugin_sd: float = Field(60.0, gt=0)
    plugout_mean: time = time(9, 0)
    plugout_sd: float = Field(60.0, gt=0)
    energy_mean: float = Field(5.8, ge=0)
    energy_sd: float = Field(2.67, ge=0)
    planning_quantile: float = Field(0.98, ge=0.5, lt=1)
    seed: int = Field(0, ge=0)

    @property
    def plugin_minutes(self) -> float:
        return _minutes(self.plugin_mean)

    @property
    def plugout_minutes(self) -> float:
        minutes = _minutes(self.plugout_mean)
        if minutes <= self.plugin_minutes:
            minutes += MINUTES_PER_DAY
        return minutes

    @property
    def z(self) -> float:
        return float(norm.ppf(self.planning_quantile))

    def planned_window(self, delta_t: float = 0.5) -> PlannedWindow:
        return conservative_window(self, delta_t)

    def planned_energy(self) -> float:
        return conservative_energy(self)

    def realize(self, day_index: int) -> SessionRealization:
        return sample_day(self, day_index)


class FixedSchedule(BaseModel):
    """Deterministic plug window and demand; planned equals realized."""

    model_config = ConfigDict(frozen=True)

    plug_in: time = time(18, 0)
    duration_h: float = Field(15.0, gt=0, le=24)
    demand_kwh: float = Field(5.0, ge=0)

    @property
    def plugin_minutes(self) -> float:
        return _minutes(self.plug_in)

    def planned_window(self, delta_t: float = 0.5) -> PlannedWindow:
        start = self.plugin_minutes
        return quantize_window(start, start + self.duration_h * 60.0, delta_t)

    def planned_energy(self) -> float:
        return self.demand_kwh

    def realize(self, day_index: int) -> SessionRealization:
        midnight = midnight_of(day_index)
        plug_in = midnight + pd.Timedelta(minutes=self.plugin_minutes)
        return SessionRealization(plug_in, plug_in + pd.Timedelta(hours=self.duration_h), self.demand_kwh)


def conservative_window(model: BehaviorModel, delta_t: float = 0.5, quantize: bool = True) -> PlannedWindow:
    """Window in which the vehicle is plugged in with probability ``planning_quantile``.

    Args:
        model: Behavior parameters.
        delta_t: Grid step in hours.
        quantize: Round the start up and the end down to the grid.

    Returns:
        PlannedWindow, e.g. 20:30-06:30 for the defaults (20:03-06:57 unquantized).
    """
    start = model.plugin_minutes + model.z * model.plugin_sd
    end = model.plugout_minutes - model.z * model.plugout_sd
    if not quantize:
        if end <= start:
            raise EmptyWindow(f"planned window {_time_of_day(start)}-{_time_of_day(end)} is empty")
        return PlannedWindow(start, end)
    return quantize_window(start, end, delta_t)


def conservative_energy(model: BehaviorModel) -> float:
    return model.energy_mean + model.z * model.energy_sd


def sample_day(model: BehaviorModel, day_index: int) -> SessionRealization:
    """Realized session for the night starting on ``day_index``.

    Draws are keyed by (seed, day_index), so a day's realization does not
    depend on which other days were sampled.
    """
    rng = np.random.default_rng([model.seed, day_index])
    plug_in = rng.normal(model.plugin_minutes, model.plugin_sd)
    plug_out = rng.normal(model.plugout_minutes, model.plugout_sd)
    for _ in range(MAX_REDRAWS):
        if plug_out > plug_in:
            break
        plug_out = rng.normal(model.plugout_minutes, model.plugout_sd)
    else:
        plug_out = plug_in + model.plugout_minutes - model.plugin_minutes

    energy = rng.normal(model.energy_mean, model.energy_sd) if model.energy_sd > 0 else model.energy_mean
    for _ in range(MAX_REDRAWS):
        if energy >= 0:
            break
        energy = rng.normal(model.energy_mean, model.energy_sd)
    else:
        logger.warning(f"Day {day_index}: energy draw still negative after {MAX_REDRAWS} redraws")
        energy = 0.0

    midnight = midnight_of(day_index)
    return SessionRealization(
        plug_in=midnight + pd.Timedelta(minutes=float(plug_in)),
        plug_out=midnight + pd.Timedelta(minutes=float(plug_out)),
        day_energy=float(energy),
    )
