"""Rolling-horizon charging simulation.

The clock advances in grid steps over [start, end). While the vehicle is
plugged in, the MPC strategy re-solves the horizon problem on forecast
intensities and applies the first interval's power against the actual
intensity; the uncontrolled strategy charges at full power up to the SOC
cap. Each night's driving energy is deducted at its realized plug-in.
"""
import logging
import math
from dataclasses import dataclass
from datetime import date, datetime
from typing import Dict, List, Literal, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from behavior import BehaviorModel, FixedSchedule, day_index_of, midnight_of
from forecast import ForecastModel, synthesize
from grid_data import TIMESTAMP_FORMAT, CarbonSeries, RangeError, as_utc
from scheduler import (
    TOLERANCE,
    BatteryParams,
    HorizonProblem,
    Infeasible,
    SessionWindow,
    default_floors,
    solve,
    uncontrolled_power,
)

logger = logging.getLogger(__name__)

LOG_COLUMNS = [
    "timestamp", "plugged", "power", "soc", "actual_intensity", "emitted", "cumulative_emissions", "session",
]


class SimError(RuntimeError):
    """Base class for simulation errors."""


class EmptyLog(SimError):
    pass


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    strategy: Literal["uncontrolled", "mpc"] = "mpc"
    horizon: int = Field(1, ge=1)
    battery: BatteryParams = BatteryParams()
    behavior: Union[BehaviorModel, FixedSchedule] = BehaviorModel()
    start: datetime
    end: datetime
    morning_floor: float = 50.0
    initial_soc: float = 50.0
    seed: Optional[int] = Field(None, ge=0)
    forecast: ForecastModel = ForecastModel()
    perfect_forecast: bool = False
    resolve: Literal["step", "session"] = "step"
    floor_overrides: Dict[date, float] = Field(default_factory=dict)

    @field_validator("start", "end", mode="before")
    @classmethod
    def parse_utc(cls, value):
        return as_utc(value).to_pydatetime()

    @model_validator(mode="after")
    def check_ranges(self):
        if self.end <= self.start:
            raise ValueError(f"end ({self.end}) must be after start ({self.start})")
        low, high = self.battery.soc_min, self.battery.soc_max
        if not low <= self.morning_floor <= high:
            raise ValueError(f"morning_floor {self.morning_floor} outside [{low}, {high}]")
        if not low <= self.initial_soc <= high:
            raise ValueError(f"initial_soc {self.initial_soc} outside [{low}, {high}]")
        for night, floor in self.floor_overrides.items():
            if not low <= floor <= high:
                raise ValueError(f"floor override {floor} for {night} outside [{low}, {high}]")
        return self

    @property
    def label(self) -> str:
        return "uncontrolled" if self.strategy == "uncontrolled" else f"mpc{self.horizon}"

    def effective_behavior(self) -> Union[BehaviorModel, FixedSchedule]:
        if self.seed is not None and isinstance(self.behavior, BehaviorModel):
            return self.behavior.model_copy(update={"seed": self.seed})
        return self.behavior

    def effective_forecast(self) -> ForecastModel:
        if self.seed is not None:
            return self.forecast.model_copy(update={"sign_seed": self.seed})
        return self.forecast


@dataclass(frozen=True)
class SimEvent:
    timestamp: pd.Timestamp
    kind: str
    session: str
    message: str

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp.strftime(TIMESTAMP_FORMAT),
            "kind": self.kind,
            "session": self.session,
            "message": self.message,
        }


@dataclass(frozen=True)
class Totals:
    energy_charged: float
    emissions: float
    c_ev: Optional[float]
    cumulative_emissions: pd.Series
    per_session: pd.DataFrame

    def to_dict(self) -> dict:
        return {"energy_charged": self.energy_charged, "emissions": self.emissions, "c_ev": self.c_ev}


@dataclass
class SimResult:
    config: ScenarioConfig
    region_id: int
    region_name: str
    log: pd.DataFrame
    totals: Totals
    events: List[SimEvent]
    initial_soc: float
    final_soc: float
    consumption_applied: float

    @property
    def shortfalls(self) -> int:
        return sum(1 for e in self.events if e.kind in ("morning_shortfall", "consumption_shortfall"))


@dataclass
class _Night:
    """One plug-in session, as planned and as realized, in series positions."""

    day_index: int
    label: str
    plan_start: int
    plan_end: int
    plug_in: int
    plug_out: int
    day_energy: float
    planned_energy: float
    morning_floor: float
    cached_powers: Optional[np.ndarray] = None
    cached_at: int = -1


def _position(series: CarbonSeries, timestamp: pd.Timestamp) -> float:
    return (timestamp - series.start) / series.step


def _nights(config: ScenarioConfig, series: CarbonSeries) -> List[_Night]:
    """Nights from the start date through enough extra days for look-ahead."""
    behavior = config.effective_behavior()
    window = behavior.planned_window(series.delta_t)
    planned_energy = behavior.planned_energy()
    first = day_index_of(config.start)
    last = day_index_of(config.end) + config.horizon

    realizations = [behavior.realize(d) for d in range(first, last + 1)]
    nights = []
    for i, d in enumerate(range(first, last)):
        realization = realizations[i]
        plug_out = min(realization.plug_out, realizations[i + 1].plug_in)
        plan_start, plan_end = (int(round(_position(series, t))) for t in window.bounds(d))
        plug_in = int(math.ceil(_position(series, realization.plug_in) - 1e-9))
        plug_out = max(plug_in, int(math.floor(_position(series, plug_out) + 1e-9)))
        night_date = midnight_of(d).date()
        nights.append(_Night(
            day_index=d,
            label=night_date.isoformat(),
            plan_start=plan_start,
            plan_end=plan_end,
            plug_in=plug_in,
            plug_out=plug_out,
            day_energy=realization.day_energy,
            planned_energy=planned_energy,
            morning_floor=config.floor_overrides.get(night_date, config.morning_floor),
        ))
    return nights


class _Simulation:
    def __init__(self, config: ScenarioConfig, series: CarbonSeries):
        self.config = config
        self.series = series
        self.battery = config.battery
        self.delta_t = series.delta_t
        self.scale = config.battery.kwh_per_point
        self.forecast_model = config.effective_forecast()
        self.events: List[SimEvent] = []
        try:
            self.t0 = series.index_of(config.start)
            self.t1 = series.index_of(config.end)
        except RangeError as e:
            raise RangeError(f"scenario range not covered by {series.region_name} series: {e}")
        self.nights = _nights(config, series)

    def timestamp(self, t: int) -> pd.Timestamp:
        return self.series.start + t * self.series.step

    def event(self, t: int, kind: str, night: _Night, message: str):
        logger.warning(f"{self.timestamp(t)} [{night.label}] {kind}: {message}")
        self.events.append(SimEvent(self.timestamp(t), kind, night.label, message))

    def run(self) -> SimResult:
        n_steps = self.t1 - self.t0
        plugged_night = np.full(n_steps, -1)
        deduct_at: Dict[int, int] = {}
        plugout_at: Dict[int, int] = {}
        for j, night in enumerate(self.nights):
            a, b = max(night.plug_in, self.t0), min(night.plug_out, self.t1)
            if b > a:
                plugged_night[a - self.t0:b - self.t0] = j
            if self.t0 <= night.plug_in < self.t1:
                deduct_at[night.plug_in] = j
            if self.t0 < night.plug_out <= self.t1 and night.plug_out > night.plug_in:
                plugout_at[night.plug_out] = j

        soc = self.config.initial_soc
        consumed = 0.0
        powers = np.zeros(n_steps)
        socs = np.zeros(n_steps)
        sessions = [""] * n_steps
        actual = self.series.actual[self.t0:self.t1]

        for t in range(self.t0, self.t1):
            if t in plugout_at:
                self.check_morning(t, self.nights[plugout_at[t]], soc)
            if t in deduct_at:
                soc, used = self.deduct(t, self.nights[deduct_at[t]], soc)
                consumed += used

            j = plugged_night[t - self.t0]
            power = 0.0
            if j >= 0:
                night = self.nights[j]
                sessions[t - self.t0] = night.label
                if self.config.strategy == "uncontrolled":
                    power = uncontrolled_power(soc, self.battery, self.delta_t)
                elif night.plan_start <= t < night.plan_end:
                    power = self.mpc_power(t, j, soc)
                headroom = max(0.0, self.battery.soc_max - soc) * self.scale / self.delta_t
                power = min(max(power, 0.0), headroom)
            powers[t - self.t0] = power
            soc = min(soc + power * self.delta_t / self.scale, self.battery.soc_max)
            socs[t - self.t0] = soc

        if self.t1 in plugout_at:
            self.check_morning(self.t1, self.nights[plugout_at[self.t1]], soc)

        emitted = powers * self.delta_t * actual
        log = pd.DataFrame({
            "timestamp": self.series.timestamps[self.t0:self.t1],
            "plugged": plugged_night >= 0,
            "power": powers,
            "soc": socs,
            "actual_intensity": actual,
            "emitted": emitted,
            "cumulative_emissions": np.cumsum(emitted),
            "session": sessions,
        })
        totals = compute_metrics(log, self.delta_t)
        logger.info(
            f"{self.config.label} on {self.series.region_name}: {totals.energy_charged:.1f} kWh, "
            f"{totals.emissions / 1000:.1f} kgCO2, c_ev={totals.c_ev}"
        )
        return SimResult(
            config=self.config,
            region_id=self.series.region_id,
            region_name=self.series.region_name,
            log=log,
            totals=totals,
            events=self.events,
            initial_soc=self.config.initial_soc,
            final_soc=float(soc),
            consumption_applied=consumed,
        )

    def deduct(self, t: int, night: _Night, soc: float):
        needed = night.day_energy / self.scale
        available = soc - self.battery.soc_min
        if needed > available + TOLERANCE:
            self.event(t, "consumption_shortfall",
                       night, f"driving needed {night.day_energy:.2f} kWh, only {available * self.scale:.2f} kWh above soc_min")
            return self.battery.soc_min, max(available, 0.0) * self.scale
        return soc - needed, night.day_energy

    def check_morning(self, t: int, night: _Night, soc: float):
        if soc < night.morning_floor - 1e-6:
            self.event(t, "morning_shortfall", night, f"SOC {soc:.2f}% below floor {night.morning_floor:.2f}%")

    def predicted(self, t: int, length: int) -> np.ndarray:
        if self.config.perfect_forecast:
            return np.array(self.series.actual[t:t + length])
        return np.array(synthesize(self.series, t, length, self.forecast_model).values)

    def mpc_power(self, t: int, j: int, soc: float) -> float:
        night = self.nights[j]
        if self.config.resolve == "session" and night.cached_powers is not None:
            offset = t - night.cached_at
            if offset < len(night.cached_powers):
                return float(night.cached_powers[offset])

        schedule = self.solve_horizon(t, j, soc)
        if self.config.resolve == "session":
            night.cached_powers = schedule.powers[0]
            night.cached_at = t
        return schedule.first_power

    def horizon_nights(self, t: int, j: int, length: int) -> List[_Night]:
        selected = [self.nights[j]]
        for night in self.nights[j + 1:]:
            if len(selected) >= self.config.horizon or night.plan_end > t + length:
                break
            if night.plan_end > night.plan_start:
                selected.append(night)
        return selected

    def solve_horizon(self, t: int, j: int, soc: float):
        length = min(self.config.horizon * self.series.grid.intervals_per_day, len(self.series) - t)
        nights = self.horizon_nights(t, j, length)
        end = min(nights[0].plan_end, t + length)
        predicted = self.predicted(t, length)

        windows = [SessionWindow(t, end - 1, predicted[:end - t])]
        for night in nights[1:]:
            windows.append(SessionWindow(
                night.plan_start, night.plan_end - 1,
                predicted[night.plan_start - t:night.plan_end - t],
            ))
        # Driving before each later session, then the day after the last one
        following = self.nights[j + len(nights)] if j + len(nights) < len(self.nights) else None
        demands = [night.planned_energy for night in nights[1:]]
        if following is not None:
            demands.append(following.planned_energy)
        floors = default_floors(demands, [night.morning_floor for night in nights], self.battery)

        tried = set()
        while True:
            problem = HorizonProblem(tuple(windows), tuple(demands), soc, tuple(floors), self.battery, self.delta_t)
            try:
                return solve(problem)
            except Infeasible as e:
                label = nights[e.session].label
                if e.session in tried:
                    return self.fallback(t, nights[0], windows[0], soc, floors[0], e)
                tried.add(e.session)
                relaxed = max(self.battery.soc_min, min(floors[e.session], e.achievable_soc))
                self.event(t, "infeasible", nights[e.session],
                           f"floor for {label} relaxed from {floors[e.session]:.2f}% to {relaxed:.2f}%")
                floors[e.session] = relaxed

    def fallback(self, t: int, night: _Night, window: SessionWindow, soc: float, floor: float, error: Infeasible):
        achievable = min(
            self.battery.soc_max,
            soc + len(window) * self.battery.p_max * self.delta_t / self.scale,
        )
        floor = max(self.battery.soc_min, min(floor, achievable))
        self.event(t, "infeasible", night,
                   f"horizon still infeasible ({error}); solving tonight only with floor {floor:.2f}%")
        problem = HorizonProblem((window,), (), soc, (floor,), self.battery, self.delta_t)
        return solve(problem)


def run(config: ScenarioConfig, series: CarbonSeries) -> SimResult:
    """Simulate one scenario on ``series``; deterministic for a given config."""
    return _Simulation(config, series).run()


def compute_metrics(log: pd.DataFrame, delta_t: float = 0.5) -> Totals:
    """Energy, emissions and C_EV of a step log, plus plotting series.

    Raises:
        EmptyLog: if the log has no rows.
    """
    if log is None or log.empty:
        raise EmptyLog("step log is empty")
    energy = log["power"].to_numpy(dtype=float) * delta_t
    emitted = energy * log["actual_intensity"].to_numpy(dtype=float)
    energy_charged = float(energy.sum())
    emissions = float(emitted.sum())
    c_ev = emissions / energy_charged if energy_charged > 0 else None

    cumulative = pd.Series(np.cumsum(emitted), index=pd.DatetimeIndex(log["timestamp"]), name="cumulative_emissions")
    charged = log.assign(energy=energy, emitted=emitted)
    charged = charged[charged["session"] != ""]
    per_session = charged.groupby("session", sort=True).agg(
        energy=("energy", "sum"), emissions=("emitted", "sum")
    )
    return Totals(energy_charged, emissions, c_ev, cumulative, per_session)


def write_step_log(result: SimResult, path: str) -> None:
    frame = result.log.copy()
    frame["timestamp"] = frame["timestamp"].dt.strftime(TIMESTAMP_FORMAT)
    frame[LOG_COLUMNS].to_csv(path, index=False, lineterminator="\n")


def result_to_dict(result: SimResult) -> dict:
    totals = result.totals.to_dict()
    totals["shortfalls"] = result.shortfalls
    return {
        "config": result.config.model_dump(mode="json", by_alias=True),
        "region": {"id": result.region_id, "name": result.region_name},
        "totals": totals,
        "initial_soc": result.initial_soc,
        "final_soc": result.final_soc,
        "consumption_applied": result.consumption_applied,
        "events": [event.to_dict() for event in result.events],
        "per_session": [
            {"session": session, "energy": float(row["energy"]), "emissions": float(row["emissions"])}
            for session, row in result.totals.per_session.iterrows()
        ],
    }
