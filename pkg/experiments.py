"""Scenario orchestration: strategy table, flexibility sweep, regional
comparison, the synthetic benchmark and one-week strategy traces.

Each experiment expands into independent simulation tasks, runs them on a
process pool and aggregates the per-seed outcomes into report rows.
"""
import hashlib
import logging
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from datetime import date, time
from typing import Any, Dict, Iterable, List, Literal, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
import simplejson as json
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

import config
from behavior import BehaviorError, BehaviorModel, FixedSchedule
from carbon_api import fetch_region
from forecast import ForecastModel
from grid_data import TIMESTAMP_FORMAT, CarbonSeries, GridDataError, as_utc, data_hash, pseudo_periodic_series
from scheduler import BatteryParams, SchedulerError
from sim import ScenarioConfig, SimError, run

logger = logging.getLogger(__name__)

TABLE_HORIZONS = [1, 2, 4, 7]
REGIONAL_HORIZONS = [1, 2, 4]
DEFAULT_SEEDS = [0, 1, 2, 3, 4]
WINDOW_LENGTHS = [20.0, 18.0, 16.0, 14.0, 12.0, 10.0, 8.0, 6.0, 4.0]
DEMANDS = [5.0, 10.0, 20.0, 30.0]
TRACE_HORIZONS = [1, 4]
TRACE_COLUMNS = ["timestamp", "strategy", "soc", "power", "actual_intensity", "cumulative_emissions"]


class ExperimentError(ValueError):
    """Base class for experiment configuration errors."""


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["strategy_table", "flexibility_sweep", "regional", "benchmark"] = "strategy_table"
    base: ScenarioConfig
    horizons: List[int] = Field(default_factory=lambda: list(TABLE_HORIZONS))
    seeds: List[int] = Field(default_factory=lambda: list(DEFAULT_SEEDS))
    window_lengths: List[float] = Field(default_factory=lambda: list(WINDOW_LENGTHS))
    placements: List[Literal["overnight", "daytime"]] = Field(default_factory=lambda: ["overnight", "daytime"])
    demands: List[float] = Field(default_factory=lambda: list(DEMANDS))
    regions: List[int] = Field(default_factory=lambda: list(range(1, 15)))
    sweep_horizon: int = Field(4, ge=1)
    overnight_anchor: time = time(1, 0)
    daytime_anchor: time = time(13, 0)
    workers: int = Field(default_factory=lambda: config.WORKERS)

    @field_validator("horizons", "seeds", "window_lengths", "placements", "demands", "regions")
    @classmethod
    def non_empty(cls, value):
        if not value:
            raise ValueError("sweep axes must be non-empty")
        return value

    @field_validator("horizons")
    @classmethod
    def positive_horizons(cls, value):
        if any(n < 1 for n in value):
            raise ValueError("horizons must be >= 1")
        return value

    @property
    def replications(self) -> int:
        return len(self.seeds)

    def describe(self) -> dict:
        described = self.model_dump(mode="json", by_alias=True, exclude={"workers"})
        axes = {
            "strategy_table": ["horizons"],
            "flexibility_sweep": ["window_lengths", "placements", "demands", "sweep_horizon",
                                  "overnight_anchor", "daytime_anchor"],
            "regional": ["regions", "horizons"],
            "benchmark": ["horizons"],
        }[self.kind]
        return {key: described[key] for key in ["kind", "base", "seeds"] + axes}


@dataclass(frozen=True)
class Task:
    key: Tuple
    config: ScenarioConfig
    series_key: str


@dataclass(frozen=True)
class Outcome:
    key: Tuple
    energy: float
    emissions: float
    c_ev: Optional[float]
    shortfalls: int
    error: Optional[str] = None


@dataclass
class ReportRow:
    labels: Dict[str, Any]
    strategy: str
    horizon: int
    energy: Optional[float]
    emissions: Optional[float]
    c_ev: Optional[float]
    c_ev_spread: Optional[float]
    pct_reduction_vs_uncontrolled: Optional[float]
    abs_reduction: Optional[float]
    shortfalls: int
    replications: int
    error: Optional[str] = None

    def to_dict(self) -> dict:
        row = dict(self.labels)
        row.update({k: v for k, v in asdict(self).items() if k != "labels"})
        return row


@dataclass
class Report:
    kind: str
    rows: List[ReportRow]
    meta: Dict[str, Any]
    summary: Dict[str, Any] = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.to_dict() for row in self.rows])

    def to_dict(self) -> dict:
        return {"meta": self.meta, "rows": [row.to_dict() for row in self.rows], "summary": self.summary}


# ----------------------------------------------------------------------------
# Scenario files
# ----------------------------------------------------------------------------

def load_scenario_file(path: str) -> Dict[str, str]:
    """Read a ``key=value`` scenario file; empty values are dropped."""
    if not os.path.exists(path):
        raise ExperimentError(f"scenario file {path} not found")
    return {k: v for k, v in dotenv_values(path).items() if v not in (None, "")}


def _list(value, cast) -> List:
    if isinstance(value, str):
        return [cast(item.strip()) for item in value.split(",") if item.strip()]
    if isinstance(value, (list, tuple)):
        return [cast(item) for item in value]
    return [cast(value)]


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def _time(value) -> time:
    if isinstance(value, time):
        return value
    return time.fromisoformat(str(value).strip())


def _floor_overrides(value) -> Dict[date, float]:
    if isinstance(value, dict):
        return {date.fromisoformat(str(k)): float(v) for k, v in value.items()}
    overrides = {}
    for item in _list(value, str):
        night, _, floor = item.partition("=") if "=" in item else item.rpartition(":")
        overrides[date.fromisoformat(night.strip())] = float(floor)
    return overrides


def scenario_from_mapping(mapping: Mapping[str, Any], **defaults) -> ScenarioConfig:
    """Build a ScenarioConfig from scenario-file keys (CLI values already merged in)."""
    values = dict(defaults)
    values.update({k: v for k, v in mapping.items() if v is not None})
    try:
        battery = BatteryParams(
            capacity=float(values.get("battery_capacity", 50.0)),
            p_max=float(values.get("p_max", 10.0)),
            soc_min=float(values.get("soc_min", 20.0)),
            soc_max=float(values.get("soc_max", 80.0)),
        )
        if any(k in values for k in ("fixed_demand", "fixed_plug_in", "fixed_duration_h")):
            behavior = FixedSchedule(
                plug_in=_time(values.get("fixed_plug_in", "18:00")),
                duration_h=float(values.get("fixed_duration_h", 15.0)),
                demand_kwh=float(values.get("fixed_demand", 5.0)),
            )
        else:
            behavior = BehaviorModel(
                plugin_mean=_time(values.get("plugin_mean", "18:00")),
                plugin_sd=float(values.get("plugin_sd", 60.0)),
                plugout_mean=_time(values.get("plugout_mean", "09:00")),
                plugout_sd=float(values.get("plugout_sd", 60.0)),
                energy_mean=float(values.get("energy_mean", 5.8)),
                energy_sd=float(values.get("energy_sd", 2.67)),
                planning_quantile=float(values.get("planning_quantile", 0.98)),
            )
        forecast = ForecastModel(
            lambda_=float(values.get("lambda", 9.97e-3)),
            fallback_rel_error=float(values.get("fallback_eps", 0.02)),
            eps_mode=values.get("eps_mode", "per-interval"),
        )
        seed = values.get("seed")
        return ScenarioConfig(
            strategy=values.get("strategy", "mpc"),
            horizon=int(values.get("horizon", 1)),
            battery=battery,
            behavior=behavior,
            start=values["from"],
            end=values["to"],
            morning_floor=float(values.get("morning_floor", 50.0)),
            initial_soc=float(values.get("initial_soc", 50.0)),
            seed=None if seed is None else int(seed),
            forecast=forecast,
            perfect_forecast=_bool(values.get("perfect_forecast", False)),
            resolve=values.get("resolve", "step"),
            floor_overrides=_floor_overrides(values.get("floor_overrides", {})),
        )
    except KeyError as e:
        raise ExperimentError(f"scenario is missing {e.args[0]!r}")


def spec_from_mapping(kind: str, mapping: Mapping[str, Any], **defaults) -> ExperimentSpec:
    values = dict(defaults)
    values.update({k: v for k, v in mapping.items() if v is not None})
    spec = {"kind": kind, "base": scenario_from_mapping(values)}
    if "horizons" in values:
        spec["horizons"] = _list(values["horizons"], int)
    if "seeds" in values:
        spec["seeds"] = _list(values["seeds"], int)
    elif "replications" in values:
        spec["seeds"] = list(range(int(values["replications"])))
    if "window_lengths" in values:
        spec["window_lengths"] = _list(values["window_lengths"], float)
    if "placements" in values:
        spec["placements"] = _list(values["placements"], str)
    if "demands" in values:
        spec["demands"] = _list(values["demands"], float)
    if "regions" in values:
        spec["regions"] = _list(values["regions"], int)
    if "sweep_horizon" in values:
        spec["sweep_horizon"] = int(values["sweep_horizon"])
    for anchor in ("overnight_anchor", "daytime_anchor"):
        if anchor in values:
            spec[anchor] = _time(values[anchor])
    if "workers" in values:
        spec["workers"] = int(values["workers"])
    return ExperimentSpec(**spec)


# ----------------------------------------------------------------------------
# Execution
# ----------------------------------------------------------------------------

_WORKER_SERIES: Dict[str, CarbonSeries] = {}


def _init_worker(series_by_key: Dict[str, CarbonSeries]):
    global _WORKER_SERIES
    _WORKER_SERIES = series_by_key


def _run_task(task: Task) -> Outcome:
    try:
        result = run(task.config, _WORKER_SERIES[task.series_key])
    except (GridDataError, BehaviorError, SchedulerError, SimError) as e:
        logger.warning(f"Scenario {task.key} failed: {e}")
        return Outcome(task.key, float("nan"), float("nan"), None, 0, error=str(e))
    totals = result.totals
    return Outcome(task.key, totals.energy_charged, totals.emissions, totals.c_ev, result.shortfalls)


def run_pool(tasks: List[Task], series_by_key: Dict[str, CarbonSeries], workers: int = 1) -> List[Outcome]:
    """Run independent scenarios, in parallel when ``workers > 1``.

    Outcomes are returned sorted by task key regardless of completion order.
    """
    outcomes = []
    if workers <= 1 or len(tasks) <= 1:
        _init_worker(series_by_key)
        for task in tqdm(tasks, desc="scenarios", unit="run", disable=len(tasks) < 2):
            outcomes.append(_run_task(task))
    else:
        with ProcessPoolExecutor(
            max_workers=min(workers, len(tasks)),
            initializer=_init_worker,
            initargs=(series_by_key,),
        ) as pool:
            futures = [pool.submit(_run_task, task) for task in tasks]
            for future in tqdm(as_completed(futures), total=len(futures), desc="scenarios", unit="run"):
                outcomes.append(future.result())
    return sorted(outcomes, key=lambda o: o.key)


def _strategy(horizon: int) -> str:
    return "uncontrolled" if horizon == 0 else f"mpc{horizon}"


def _config_for(base: ScenarioConfig, horizon: int, seed: int, **updates) -> ScenarioConfig:
    update = {"strategy": "uncontrolled" if horizon == 0 else "mpc", "horizon": max(horizon, 1), "seed": seed}
    update.update(updates)
    return base.model_copy(update=update)


def aggregate(outcomes: Iterable[Outcome], label_names: List[str]) -> List[ReportRow]:
    """Average outcomes over seeds and compare each row with its matched uncontrolled row.

    Outcome keys are ``(group, horizon, seed)`` with horizon 0 for the
    uncontrolled strategy; ``group`` values are labelled by ``label_names``.

    A row's ``c_ev`` is the pooled ratio of mean emissions to mean energy
    over seeds, so it can be recomputed from the row's own ``emissions`` and
    ``energy``; ``c_ev_spread`` is the standard deviation of the per-seed
    ``c_ev`` values.
    """
    groups = defaultdict(list)
    for outcome in outcomes:
        group, horizon, _ = outcome.key
        groups[(group, horizon)].append(outcome)

    rows: Dict[Tuple, ReportRow] = {}
    for (group, horizon), items in sorted(groups.items()):
        ok = [o for o in items if o.error is None]
        labels = dict(zip(label_names, group))
        if not ok:
            rows[(group, horizon)] = ReportRow(
                labels, _strategy(horizon), horizon, None, None, None, None, None, None,
                0, len(items), error=items[0].error,
            )
            continue
        energy = float(np.mean([o.energy for o in ok]))
        emissions = float(np.mean([o.emissions for o in ok]))
        per_seed = [o.c_ev for o in ok if o.c_ev is not None]
        error = None if len(ok) == len(items) else f"{len(items) - len(ok)} replication(s) failed"
        rows[(group, horizon)] = ReportRow(
            labels=labels,
            strategy=_strategy(horizon),
            horizon=horizon,
            energy=energy,
            emissions=emissions,
            c_ev=emissions / energy if energy > 0 else None,
            c_ev_spread=float(np.std(per_seed)) if per_seed else None,
            pct_reduction_vs_uncontrolled=None,
            abs_reduction=None,
            shortfalls=sum(o.shortfalls for o in ok),
            replications=len(ok),
            error=error,
        )

    for (group, horizon), row in rows.items():
        baseline = rows.get((group, 0))
        if baseline is None or baseline.c_ev is None or row.c_ev is None:
            continue
        row.pct_reduction_vs_uncontrolled = 100.0 * (1.0 - row.c_ev / baseline.c_ev)
        row.abs_reduction = baseline.c_ev - row.c_ev
    return list(rows.values())


def _meta(spec: ExperimentSpec, series: Iterable[CarbonSeries]) -> dict:
    hashes = sorted(data_hash(s) for s in series)
    digest = hashes[0] if len(hashes) == 1 else hashlib.sha256("".join(hashes).encode("utf-8")).hexdigest()
    return {
        "kind": spec.kind,
        "config": spec.describe(),
        "seeds": list(spec.seeds),
        "data_hash": digest,
        "tool_version": config.TOOL_VERSION,
    }


def _by_strategy(rows: List[ReportRow], attribute: str) -> Dict[str, Optional[float]]:
    return {row.strategy: getattr(row, attribute) for row in rows}


def strategy_table(spec: ExperimentSpec, series: CarbonSeries) -> Report:
    """Uncontrolled and MPC(N) rows for every horizon, averaged over seeds."""
    horizons = [0] + sorted(set(spec.horizons))
    tasks = [
        Task(((), n, seed), _config_for(spec.base, n, seed), "series")
        for n in horizons
        for seed in spec.seeds
    ]
    logger.info(f"Strategy table: {len(tasks)} runs on {series.region_name}")
    rows = aggregate(run_pool(tasks, {"series": series}, spec.workers), [])

    c_ev = _by_strategy(rows, "c_ev")
    chain = [c_ev.get(label) for label in ("mpc4", "mpc2", "mpc1", "uncontrolled")]
    ordering = None
    if all(v is not None for v in chain):
        ordering = all(a < b for a, b in zip(chain, chain[1:]))
    summary = {
        "c_ev": c_ev,
        "pct_reduction": _by_strategy(rows, "pct_reduction_vs_uncontrolled"),
        "ordering_holds": ordering,
    }
    return Report(spec.kind, rows, _meta(spec, [series]), summary)


def placement_plug_in(anchor: time, length_h: float) -> time:
    """Plug-in time of a window of ``length_h`` hours centred on ``anchor``."""
    minutes = (anchor.hour * 60 + anchor.minute - length_h * 30.0) % (24 * 60)
    return time(int(minutes // 60), int(minutes % 60))


def _inversions(values: List[Optional[float]]) -> int:
    present = [v for v in values if v is not None]
    return sum(1 for a, b in zip(present, present[1:]) if b < a)


def flexibility_sweep(spec: ExperimentSpec, series: CarbonSeries) -> Report:
    """MPC against uncontrolled over window length x placement x fixed demand."""
    anchors = {"overnight": spec.overnight_anchor, "daytime": spec.daytime_anchor}
    lengths = sorted(set(spec.window_lengths), reverse=True)
    tasks = []
    for placement in spec.placements:
        for length in lengths:
            for demand in spec.demands:
                behavior = FixedSchedule(
                    plug_in=placement_plug_in(anchors[placement], length),
                    duration_h=length,
                    demand_kwh=demand,
                )
                group = (placement, float(length), float(demand))
                for n in (0, spec.sweep_horizon):
                    for seed in spec.seeds:
                        tasks.append(Task((group, n, seed), _config_for(spec.base, n, seed, behavior=behavior), "series"))
    logger.info(f"Flexibility sweep: {len(tasks)} runs on {series.region_name}")
    rows = aggregate(
        run_pool(tasks, {"series": series}, spec.workers), ["placement", "window_h", "demand_kwh"]
    )

    mpc = [r for r in rows if r.horizon == spec.sweep_horizon]
    by_demand = {}
    for demand in sorted(set(spec.demands)):
        values = [r.c_ev for r in mpc if r.labels["demand_kwh"] == demand and r.c_ev is not None]
        by_demand[f"{demand:g}"] = float(np.mean(values)) if values else None
    summary = {"mean_c_ev_by_demand": by_demand, "window_increase_pct": {}, "inversions": {}}
    low, high = by_demand.get(f"{min(spec.demands):g}"), by_demand.get(f"{max(spec.demands):g}")
    summary["demand_increase_pct"] = 100.0 * (high / low - 1.0) if low and high is not None else None
    for placement in spec.placements:
        curve = []
        for length in lengths:
            values = [r.c_ev for r in mpc
                      if r.labels["placement"] == placement and r.labels["window_h"] == length and r.c_ev is not None]
            curve.append(float(np.mean(values)) if values else None)
        present = [v for v in curve if v is not None]
        summary["window_increase_pct"][placement] = (
            100.0 * (present[-1] / present[0] - 1.0) if len(present) >= 2 and present[0] else None
        )
        summary["inversions"][placement] = _inversions(curve)
    summary["flagged_cells"] = sorted(
        f"{r.labels['placement']}/{r.labels['window_h']:g}h/{r.labels['demand_kwh']:g}kWh"
        for r in mpc if r.shortfalls > 0 or r.error
    )
    return Report(spec.kind, rows, _meta(spec, [series]), summary)


def load_regional_series(
    region_ids: List[int],
    start,
    end,
    cache_dir: Optional[str] = None,
    regions_file: Optional[str] = None,
    fill: Optional[str] = None,
) -> Tuple[Dict[int, CarbonSeries], Dict[int, str]]:
    """Fetch every region, isolating failures to the region that raised them."""
    series, errors = {}, {}
    for region_id in region_ids:
        try:
            series[region_id] = fetch_region(region_id, start, end, cache_dir, regions_file, fill)
        except (GridDataError, ValueError) as e:
            logger.warning(f"Region {region_id} skipped: {e}")
            errors[region_id] = str(e)
    return series, errors


def regional(spec: ExperimentSpec, series_by_region: Dict[int, CarbonSeries], errors: Optional[Dict[int, str]] = None) -> Report:
    """Uncontrolled and MPC rows per region; failed regions are flagged rows."""
    errors = dict(errors or {})
    horizons = [0] + sorted(set(spec.horizons))
    tasks = []
    for region_id in spec.regions:
        if region_id not in series_by_region:
            errors.setdefault(region_id, "no data")
            continue
        for n in horizons:
            for seed in spec.seeds:
                tasks.append(Task(((region_id,), n, seed), _config_for(spec.base, n, seed), str(region_id)))
    logger.info(f"Regional comparison: {len(tasks)} runs over {len(series_by_region)} region(s)")
    series_by_key = {str(k): v for k, v in series_by_region.items()}
    rows = aggregate(run_pool(tasks, series_by_key, spec.workers), ["region_id"])

    for row in rows:
        row.labels["region_name"] = series_by_region[row.labels["region_id"]].region_name
    for region_id in sorted(errors):
        rows.append(ReportRow(
            {"region_id": region_id, "region_name": ""}, "uncontrolled", 0,
            None, None, None, None, None, None, 0, 0, error=errors[region_id],
        ))
    rows.sort(key=lambda r: (r.labels["region_id"], r.horizon))

    mean_pct = {}
    for n in horizons[1:]:
        values = [r.pct_reduction_vs_uncontrolled for r in rows
                  if r.horizon == n and r.pct_reduction_vs_uncontrolled is not None]
        mean_pct[_strategy(n)] = float(np.mean(values)) if values else None
    summary = {"mean_pct_reduction": mean_pct, "failed_regions": sorted(errors)}
    return Report(spec.kind, rows, _meta(spec, series_by_region.values()), summary)


def benchmark_spec(days: int = 365, horizons: Optional[List[int]] = None, workers: int = 1) -> Tuple[ExperimentSpec, CarbonSeries]:
    """Spec and series for the bundled pseudo-periodic benchmark."""
    series = pseudo_periodic_series(days)
    base = ScenarioConfig(
        strategy="mpc",
        behavior=FixedSchedule(plug_in=time(18, 0), duration_h=15.0, demand_kwh=5.0),
        start=series.start,
        end=series.end,
        perfect_forecast=True,
    )
    spec = ExperimentSpec(
        kind="benchmark", base=base, horizons=horizons or [1, 4], seeds=[0], workers=workers,
    )
    return spec, series


def synthetic_benchmark(spec: Optional[ExperimentSpec] = None, series: Optional[CarbonSeries] = None) -> Report:
    """Uncontrolled vs MPC on the synthetic signal with perfect forecasts."""
    if spec is None or series is None:
        default_spec, default_series = benchmark_spec()
        spec = spec or default_spec
        series = series or default_series
    report = strategy_table(spec, series)
    report.summary = {
        "c_ev": report.summary["c_ev"],
        "pct_reduction": report.summary["pct_reduction"],
    }
    return report


def week_trace(
    base: ScenarioConfig,
    series: CarbonSeries,
    horizons: Optional[List[int]] = None,
    seed: int = 0,
    days: int = 7,
) -> pd.DataFrame:
    """Per-step SOC, power and cumulative emissions of uncontrolled and MPC(N).

    Every strategy runs from ``base.start`` for ``days`` days with the same
    seed; the frame is long-form with one row per (strategy, step).
    """
    if days < 1:
        raise ExperimentError(f"trace needs at least one day, got {days}")
    end = (as_utc(base.start) + pd.Timedelta(days=days)).to_pydatetime()
    frames = []
    for n in [0] + sorted(set(horizons or TRACE_HORIZONS)):
        result = run(_config_for(base, n, seed, end=end), series)
        log = result.log
        frames.append(pd.DataFrame({
            "timestamp": log["timestamp"].dt.strftime(TIMESTAMP_FORMAT),
            "strategy": _strategy(n),
            "soc": log["soc"],
            "power": log["power"],
            "actual_intensity": log["actual_intensity"],
            "cumulative_emissions": log["cumulative_emissions"],
        }))
        logger.info(f"Trace {_strategy(n)}: {result.totals.emissions / 1000:.2f} kgCO2 over {days} day(s)")
    return pd.concat(frames, ignore_index=True)[TRACE_COLUMNS]


def write_trace(frame: pd.DataFrame, path: str) -> None:
    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")


# ----------------------------------------------------------------------------
# Output
# ----------------------------------------------------------------------------

def report_json(report: Report) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2, ignore_nan=True) + "\n"


def matrix_frame(report: Report) -> pd.DataFrame:
    """c_ev matrix of a flexibility sweep: (placement, window) rows by demand columns."""
    frame = report.frame()
    frame = frame[frame["strategy"] != "uncontrolled"]
    return frame.pivot_table(
        index=["placement", "window_h"], columns="demand_kwh", values="c_ev", dropna=False
    ).sort_index(ascending=[True, False])


def write_report(report: Report, json_path: str, csv_path: Optional[str] = None) -> None:
    """Write the JSON report and, if requested, the long-form CSV."""
    for path in (json_path, csv_path):
        if path and os.path.dirname(path):
            os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(json_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(report_json(report))
    if csv_path:
        report.frame().to_csv(csv_path, index=False, lineterminator="\n")
        if report.kind == "flexibility_sweep":
            root, ext = os.path.splitext(csv_path)
            matrix_frame(report).to_csv(f"{root}_matrix{ext or '.csv'}", lineterminator="\n")
    logger.info(f"Wrote {report.kind} report to {json_path}")
