import logging
import os
from pathlib import Path

import click
import simplejson as json

import config
from carbon_api import NATIONAL_REGION_ID, fetch_region, load_regions
from decorators import handle_errors
from experiments import (
    REGIONAL_HORIZONS,
    flexibility_sweep,
    benchmark_spec,
    load_regional_series,
    load_scenario_file,
    regional,
    scenario_from_mapping,
    spec_from_mapping,
    strategy_table,
    synthetic_benchmark,
    week_trace,
    write_report,
    write_trace,
)
from grid_data import parse_carbon_csv, pseudo_periodic_series, serialize_carbon_csv
from sim import result_to_dict, run, write_step_log

logger = logging.getLogger(__name__)


def _region_id(value: str) -> int:
    if value.strip().lower() == "national":
        return NATIONAL_REGION_ID
    try:
        return int(value)
    except ValueError:
        raise click.BadParameter(f"expected a region id or 'national', got {value!r}")


def _load_series(path: str):
    with open(path, "rb") as f:
        data = f.read()
    return parse_carbon_csv(data, region_name=Path(path).stem)


def _scenario_values(ctx: click.Context, **overrides) -> dict:
    """Scenario-file values, then global flags, then command options."""
    values = dict(ctx.obj["file"])
    values.update({k: v for k, v in ctx.obj["flags"].items() if v is not None})
    values.update({k: v for k, v in overrides.items() if v is not None})
    return values


def _write_json(payload: dict, path: str):
    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(payload, sort_keys=True, indent=2, ignore_nan=True) + "\n")


@click.group(name="carbon-sched")
@click.option("--lambda", "lambda_", type=float, default=None, help="Forecast MAPE growth per interval.")
@click.option("--fallback-eps", type=float, default=None, help="Relative error where no one-step forecast exists.")
@click.option("--eps-mode", type=click.Choice(["per-interval", "scalar"]), default=None)
@click.option("--perfect-forecast/--noisy-forecast", default=None, help="Plan on actual intensities.")
@click.option("--morning-floor", type=float, default=None, help="Minimum SOC (%) at every plug-out.")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None, help="API response cache directory.")
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Scenario file (key=value).")
@click.option("--workers", type=int, default=None, help="Parallel scenario workers.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
@handle_errors
def cli(ctx, lambda_, fallback_eps, eps_mode, perfect_forecast, morning_floor, cache_dir, config_file, workers, verbose):
    """Carbon-aware overnight EV charging: data, simulation and experiments."""
    config.configure_logging(verbose)
    ctx.ensure_object(dict)
    ctx.obj["file"] = load_scenario_file(config_file) if config_file else {}
    ctx.obj["flags"] = {
        "lambda": lambda_,
        "fallback_eps": fallback_eps,
        "eps_mode": eps_mode,
        "perfect_forecast": perfect_forecast,
        "morning_floor": morning_floor,
        "workers": workers,
    }
    ctx.obj["cache_dir"] = cache_dir or config.CACHE_DIR


@cli.command()
@click.option("--region", "region", default="national", help="Region id or 'national'.")
@click.option("--from", "start", required=True, help="Inclusive start (UTC).")
@click.option("--to", "end", required=True, help="Exclusive end (UTC).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--fill", type=click.Choice(["linear"]), default=None, help="Interpolate short gaps.")
@click.pass_context
@handle_errors
def fetch(ctx, region, start, end, out, fill):
    """Download carbon intensity into the canonical CSV."""
    series = fetch_region(_region_id(region), start, end, cache_dir=ctx.obj["cache_dir"], fill=fill)
    with open(out, "wb") as f:
        f.write(serialize_carbon_csv(series))
    click.echo(f"{len(series)} intervals for {series.region_name} written to {out}")


@cli.command()
@click.option("--days", type=int, default=365, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@handle_errors
def synth(days, seed, out):
    """Write the pseudo-periodic benchmark signal as CSV."""
    series = pseudo_periodic_series(days, seed=seed)
    with open(out, "wb") as f:
        f.write(serialize_carbon_csv(series))
    click.echo(f"{len(series)} synthetic intervals written to {out}")


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--strategy", type=click.Choice(["uncontrolled", "mpc"]), default=None)
@click.option("--horizon", type=int, default=None)
@click.option("--from", "start", default=None)
@click.option("--to", "end", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--resolve", type=click.Choice(["step", "session"]), default=None)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--log-csv", type=click.Path(dir_okay=False), default=None, help="Also write the step log.")
@click.pass_context
@handle_errors
def simulate(ctx, data, strategy, horizon, start, end, seed, resolve, out, log_csv):
    """Run one scenario and write its totals as JSON."""
    series = _load_series(data)
    values = _scenario_values(
        ctx, strategy=strategy, horizon=horizon, seed=seed, resolve=resolve,
        **{"from": start, "to": end},
    )
    values.setdefault("from", series.start)
    values.setdefault("to", series.end)
    result = run(scenario_from_mapping(values), series)
    _write_json(result_to_dict(result), out)
    if log_csv:
        write_step_log(result, log_csv)
    c_ev = result.totals.c_ev
    click.echo(f"{result.config.label}: c_ev = {'n/a' if c_ev is None else f'{c_ev:.2f}'} gCO2e/kWh")


def _experiment_options(f):
    f = click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None, help="Long-form CSV.")(f)
    f = click.option("--out", required=True, type=click.Path(dir_okay=False), help="Report JSON.")(f)
    f = click.option("--seeds", default=None, help="Comma-separated seeds.")(f)
    f = click.option("--to", "end", default=None)(f)
    f = click.option("--from", "start", default=None)(f)
    return f


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--horizons", default=None, help="Comma-separated MPC horizons.")
@_experiment_options
@click.pass_context
@handle_errors
def table1(ctx, data, horizons, start, end, seeds, out, csv_path):
    """Uncontrolled vs MPC(N) over a year of data."""
    series = _load_series(data)
    values = _scenario_values(ctx, horizons=horizons, seeds=seeds, **{"from": start, "to": end})
    values.setdefault("from", series.start)
    values.setdefault("to", series.end)
    report = strategy_table(spec_from_mapping("strategy_table", values), series)
    write_report(report, out, csv_path)
    for strategy, c_ev in report.summary["c_ev"].items():
        click.echo(f"{strategy:>12}: {c_ev}")


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@_experiment_options
@click.pass_context
@handle_errors
def sweep(ctx, data, start, end, seeds, out, csv_path):
    """Plug-window length x placement x demand grid."""
    series = _load_series(data)
    values = _scenario_values(ctx, seeds=seeds, **{"from": start, "to": end})
    values.setdefault("from", series.start)
    values.setdefault("to", series.end)
    report = flexibility_sweep(spec_from_mapping("flexibility_sweep", values), series)
    write_report(report, out, csv_path)
    click.echo(f"demand increase: {report.summary['demand_increase_pct']}")


@cli.command(name="regional")
@click.option("--regions", default=None, help="Comma-separated region ids (default: all DNO regions).")
@click.option("--fill", type=click.Choice(["linear"]), default=None)
@_experiment_options
@click.pass_context
@handle_errors
def regional_command(ctx, regions, fill, start, end, seeds, out, csv_path):
    """Uncontrolled vs MPC(1, 2, 4) for each region."""
    values = _scenario_values(ctx, regions=regions, seeds=seeds, **{"from": start, "to": end})
    values.setdefault("from", "2023-01-01T00:00Z")
    values.setdefault("to", "2023-02-01T00:00Z")
    values.setdefault("horizons", REGIONAL_HORIZONS)
    values.setdefault("regions", sorted(k for k in load_regions() if k != NATIONAL_REGION_ID))
    spec = spec_from_mapping("regional", values)
    series, errors = load_regional_series(
        spec.regions, spec.base.start, spec.base.end, cache_dir=ctx.obj["cache_dir"], fill=fill
    )
    report = regional(spec, series, errors)
    write_report(report, out, csv_path)
    click.echo(f"mean reductions: {report.summary['mean_pct_reduction']}")


@cli.command()
@click.option("--days", type=int, default=365, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@handle_errors
def benchmark(ctx, days, out, csv_path):
    """Synthetic pseudo-periodic benchmark with perfect forecasts."""
    spec, series = benchmark_spec(days, workers=ctx.obj["flags"]["workers"] or config.WORKERS)
    report = synthetic_benchmark(spec, series)
    write_report(report, out, csv_path)
    for strategy, pct in report.summary["pct_reduction"].items():
        click.echo(f"{strategy:>12}: {pct}")


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--from", "start", default=None, help="First day of the trace (UTC).")
@click.option("--days", type=int, default=7, show_default=True)
@click.option("--horizons", default="1,4", show_default=True, help="Comma-separated MPC horizons.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Long-form CSV.")
@click.pass_context
@handle_errors
def trace(ctx, data, start, days, horizons, seed, out):
    """Per-step SOC and cumulative emissions of uncontrolled and MPC(N) over one week."""
    series = _load_series(data)
    values = _scenario_values(ctx, **{"from": start})
    values.setdefault("from", series.start)
    values.setdefault("to", series.end)
    frame = week_trace(scenario_from_mapping(values), series, [int(n) for n in horizons.split(",")], seed, days)
    write_trace(frame, out)
    final = frame.groupby("strategy", sort=False)["cumulative_emissions"].last()
    for strategy, emissions in final.items():
        click.echo(f"{strategy:>12}: {emissions / 1000:.2f} kgCO2")


if __name__ == '__main__':
    cli()
