import numpy as np
import pandas as pd
import pytest

from grid_data import CarbonSeries
from scheduler import BatteryParams

TOY_START = pd.Timestamp("2022-01-01T00:00Z")


def make_series(actual, forecast=None, start=TOY_START, name="test"):
    return CarbonSeries(0, name, start, np.asarray(actual, dtype=float),
                        None if forecast is None else np.asarray(forecast, dtype=float))


@pytest.fixture
def battery():
    return BatteryParams()


@pytest.fixture
def toy_series():
    """Two days at 500 except a cheap night-1 slot and an expensive night-2 slot."""
    actual = np.full(96, 500.0)
    actual[46:48] = [90.0, 95.0]
    actual[94:96] = [200.0, 220.0]
    return make_series(actual, name="toy")
