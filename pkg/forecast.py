"""Synthetic long-range carbon-intensity forecasts.

Stored one-step forecast errors are stretched over the horizon: the
magnitude grows linearly with the offset and the sign is a fair coin
keyed by (seed, datum, offset).
"""
import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from grid_data import CarbonSeries, RangeError

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 9.97e-3


class ForecastError(ValueError):
    """Base class for forecast synthesis errors."""


class ZeroActual(ForecastError):
    pass


class ForecastRangeError(ForecastError, RangeError):
    """The series does not cover the requested forecast window."""


class ForecastModel(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lambda_: float = Field(DEFAULT_LAMBDA, alias="lambda", ge=0)
    sign_seed: int = Field(0, ge=0)
    fallback_rel_error: float = Field(0.02, ge=0)
    eps_mode: Literal["per-interval", "scalar"] = "per-interval"


@dataclass(frozen=True)
class SyntheticForecast:
    datum: pd.Timestamp
    datum_index: int
    values: np.ndarray
    rel_errors: np.ndarray
    actual: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def one_step_rel_error(actual, forecast1):
    """Relative error of a one-step forecast, ``(forecast1 - actual) / actual``.

    Accepts scalars or equal-length arrays; returns the same kind.
    """
    actual = np.asarray(actual, dtype=float)
    forecast1 = np.asarray(forecast1, dtype=float)
    if np.any(actual == 0):
        raise ZeroActual("relative error undefined for zero actual intensity")
    if np.any(actual < 0):
        raise ValueError(f"actual intensity must be positive, got {actual.min()}")
    rel = (forecast1 - actual) / actual
    return float(rel) if rel.ndim == 0 else rel


def scale_error_magnitude(eps1_abs, l, lambda_: float = DEFAULT_LAMBDA):
    """``eps1_abs * (1 + lambda_ * (l - 1))``, broadcast over scalars or arrays."""
    eps1_abs = np.asarray(eps1_abs, dtype=float)
    l = np.asarray(l)
    if np.any(eps1_abs < 0):
        raise ValueError(f"eps1_abs must be >= 0, got {eps1_abs.min()}")
    if np.any(l < 1):
        raise ValueError(f"offset must be >= 1, got {l.min()}")
    magnitude = eps1_abs * (1.0 + lambda_ * (l - 1))
    return float(magnitude) if magnitude.ndim == 0 else magnitude


def sign_stream(seed: int, datum_index: int, horizon: int) -> np.ndarray:
    """±1 signs for offsets 1..horizon, derived statelessly from (seed, datum).

    Element ``l - 1`` depends only on (seed, datum_index, l): a longer
    horizon extends the stream without changing its prefix.
    """
    rng = np.random.default_rng([seed, datum_index])
    return np.where(rng.random(horizon) < 0.5, 1.0, -1.0)


def one_step_magnitudes(actual: np.ndarray, forecast: Optional[np.ndarray], fallback: float) -> np.ndarray:
    """|one-step relative error| per interval, ``fallback`` where undefined."""
    eps = np.full(len(actual), fallback, dtype=float)
    if forecast is not None:
        defined = actual > 0
        eps[defined] = np.abs(one_step_rel_error(actual[defined], forecast[defined]))
    return eps


def synthesize(series: CarbonSeries, datum_index: int, horizon: int, model: ForecastModel = ForecastModel()) -> SyntheticForecast:
    """Forecast for series positions [datum_index, datum_index + horizon).

    Args:
        series: Source of actuals and one-step forecasts.
        datum_index: 0-based position of the first forecast interval.
        horizon: Number of intervals to forecast.
        model: Error-growth and sign parameters.

    Returns:
        SyntheticForecast whose values equal ``actual * (1 + rel_errors)``.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    try:
        actual, forecast1 = series.window(datum_index, horizon)
    except RangeError as e:
        raise ForecastRangeError(str(e))

    eps = one_step_magnitudes(actual, forecast1, model.fallback_rel_error)
    if model.eps_mode == "scalar":
        eps = np.full(horizon, eps[0])

    offsets = np.arange(1, horizon + 1)
    magnitude = scale_error_magnitude(eps, offsets, model.lambda_)
    rel_errors = sign_stream(model.sign_seed, datum_index, horizon) * magnitude
    # Intensities cannot go below zero
    rel_errors = np.maximum(rel_errors, -1.0)
    values = actual * (1.0 + rel_errors)

    values.setflags(write=False)
    rel_errors.setflags(write=False)
    return SyntheticForecast(
        datum=series.start + datum_index * series.step,
        datum_index=datum_index,
        values=values,
        rel_errors=rel_errors,
        actual=np.array(actual),
    )


def empirical_mape(actual: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Mean absolute percentage error per offset over a stack of windows.

    Both arrays have shape (windows, horizon); zero actuals are ignored.
    """
    actual = np.atleast_2d(np.asarray(actual, dtype=float))
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if actual.shape != values.shape:
        raise ValueError("actual and values must have the same shape")
    with np.errstate(divide="ignore", invalid="ignore"):
        ape = np.abs(values - actual) / actual
    ape[actual == 0] = np.nan
    return np.nanmean(ape, axis=0)
