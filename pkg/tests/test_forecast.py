import numpy as np
import pytest

from conftest import make_series
from forecast import (
    ForecastModel,
    ForecastRangeError,
    ZeroActual,
    empirical_mape,
    one_step_rel_error,
    scale_error_magnitude,
    sign_stream,
    synthesize,
)
from grid_data import pseudo_periodic_series


def seed_with_first_sign(sign, datum_index=0):
    return next(s for s in range(1000) if sign_stream(s, datum_index, 1)[0] == sign)


def test_one_step_rel_error():
    assert one_step_rel_error(200, 210) == pytest.approx(0.05)
    assert one_step_rel_error(200, 200) == 0.0
    with pytest.raises(ZeroActual):
        one_step_rel_error(0, 10)


def test_scale_error_magnitude():
    assert scale_error_magnitude(0.05, 1) == pytest.approx(0.05)
    assert scale_error_magnitude(0.05, 97, 9.97e-3) == pytest.approx(0.097856)
    assert scale_error_magnitude(0.0, 300) == 0.0
    with pytest.raises(ValueError):
        scale_error_magnitude(-0.1, 1)
    with pytest.raises(ValueError):
        scale_error_magnitude(0.1, 0)


def test_model_accepts_lambda_alias():
    assert ForecastModel(**{"lambda": 0.0}).lambda_ == 0.0
    assert ForecastModel(lambda_=0.5).lambda_ == 0.5
    with pytest.raises(ValueError):
        ForecastModel(lambda_=-1)


def test_single_interval_positive_sign_reproduces_one_step_error():
    series = make_series([200.0, 300.0], [210.0, 300.0])
    model = ForecastModel(sign_seed=seed_with_first_sign(1.0))
    forecast = synthesize(series, 0, 1, model)
    assert forecast.values[0] == pytest.approx(210.0)


def test_negative_sign_mirrors_the_error():
    series = make_series([200.0, 300.0], [210.0, 300.0])
    model = ForecastModel(sign_seed=seed_with_first_sign(-1.0))
    assert synthesize(series, 0, 1, model).values[0] == pytest.approx(190.0)


def test_error_grows_with_offset():
    actual = np.full(97, 200.0)
    series = make_series(actual, actual * 1.05)
    forecast = synthesize(series, 0, 97, ForecastModel())
    np.testing.assert_allclose(np.abs(forecast.rel_errors[0]), 0.05)
    np.testing.assert_allclose(np.abs(forecast.rel_errors[-1]), 0.097856)
    assert np.abs(forecast.values[-1] - 200.0) == pytest.approx(200 * 0.097856)


def test_zero_lambda_all_positive_gives_one_step_magnitude():
    series = pseudo_periodic_series(days=2)
    model = ForecastModel(lambda_=0.0)
    forecast = synthesize(series, 5, 40, model)
    eps = np.abs(series.one_step_forecast[5:45] - series.actual[5:45]) / series.actual[5:45]
    np.testing.assert_allclose(np.abs(forecast.rel_errors), eps)


def test_values_relate_to_actuals_exactly():
    series = pseudo_periodic_series(days=3)
    forecast = synthesize(series, 10, 96, ForecastModel(sign_seed=3))
    np.testing.assert_array_equal(forecast.values, forecast.actual * (1.0 + forecast.rel_errors))
    assert (forecast.values >= 0).all()
    assert forecast.datum == series.start + 10 * series.step


def test_large_negative_error_is_clamped_at_zero_intensity():
    actual = np.full(4, 100.0)
    series = make_series(actual, actual * 2.5)
    model = ForecastModel(sign_seed=seed_with_first_sign(-1.0))
    forecast = synthesize(series, 0, 1, model)
    assert forecast.rel_errors[0] == -1.0
    assert forecast.values[0] == 0.0


def test_synthesis_is_deterministic_and_prefix_consistent():
    series = pseudo_periodic_series(days=4)
    model = ForecastModel(sign_seed=11)
    long = synthesize(series, 20, 144, model)
    again = synthesize(series, 20, 144, model)
    short = synthesize(series, 20, 48, model)
    np.testing.assert_array_equal(long.values, again.values)
    np.testing.assert_array_equal(long.values[:48], short.values)


def test_different_datums_draw_different_signs():
    assert not np.array_equal(sign_stream(0, 1, 64), sign_stream(0, 2, 64))


def test_signs_are_balanced():
    signs = np.concatenate([sign_stream(5, d, 96) for d in range(500)])
    assert set(np.unique(signs)) == {-1.0, 1.0}
    assert abs(signs.mean()) < 0.02


def test_scalar_mode_uses_error_at_datum():
    actual = np.full(6, 100.0)
    forecast1 = np.array([110.0, 100.0, 130.0, 100.0, 100.0, 100.0])
    series = make_series(actual, forecast1)
    forecast = synthesize(series, 0, 6, ForecastModel(lambda_=0.0, eps_mode="scalar"))
    np.testing.assert_allclose(np.abs(forecast.rel_errors), 0.1)


def test_fallback_when_no_one_step_forecast():
    series = make_series(np.full(10, 100.0))
    forecast = synthesize(series, 0, 10, ForecastModel(lambda_=0.0, fallback_rel_error=0.03))
    np.testing.assert_allclose(np.abs(forecast.rel_errors), 0.03)


def test_window_outside_series():
    series = make_series(np.full(10, 100.0))
    with pytest.raises(ForecastRangeError):
        synthesize(series, 5, 10)
    with pytest.raises(ValueError):
        synthesize(series, 0, 0)


def test_outputs_are_read_only():
    forecast = synthesize(pseudo_periodic_series(days=1), 0, 10)
    with pytest.raises(ValueError):
        forecast.values[0] = 1.0


def test_empirical_mape_per_offset():
    actual = np.array([[100.0, 200.0], [100.0, 200.0]])
    values = np.array([[110.0, 200.0], [90.0, 260.0]])
    np.testing.assert_allclose(empirical_mape(actual, values), [0.1, 0.15])


CONST_E0 = 0.05


@pytest.fixture(scope="module")
def constant_error_windows():
    """10,000 forecast windows of 192 intervals over a series with |one-step error| = 5%."""
    horizon, n_windows = 192, 10_000
    actual = pseudo_periodic_series(days=(n_windows + horizon) // 48 + 1).actual
    series = make_series(actual, actual * (1.0 + CONST_E0))
    model = ForecastModel(sign_seed=13)
    windows = [synthesize(series, d, horizon, model) for d in range(n_windows)]
    mape = empirical_mape(np.stack([w.actual for w in windows]), np.stack([w.values for w in windows]))
    signs = np.sign(np.stack([w.rel_errors for w in windows]))
    return model, mape, signs


@pytest.mark.parametrize("offset", [1, 48, 96, 192])
def test_mape_grows_linearly_with_offset(constant_error_windows, offset):
    model, mape, _ = constant_error_windows
    expected = CONST_E0 * (1.0 + model.lambda_ * (offset - 1))
    assert mape[offset - 1] == pytest.approx(expected, rel=0.02)


def test_forecast_signs_are_unbiased(constant_error_windows):
    _, _, signs = constant_error_windows
    assert abs(signs.mean()) < 0.03


def test_helpers_accept_arrays():
    actual = np.array([200.0, 100.0, 50.0])
    forecast1 = np.array([210.0, 90.0, 50.0])
    np.testing.assert_allclose(one_step_rel_error(actual, forecast1), [0.05, -0.1, 0.0])
    np.testing.assert_allclose(scale_error_magnitude(np.full(3, 0.05), np.array([1, 97, 2]), 9.97e-3),
                               [0.05, 0.097856, 0.0504985])
    with pytest.raises(ZeroActual):
        one_step_rel_error(np.array([1.0, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        scale_error_magnitude(np.array([0.1, 0.1]), np.array([1, 0]))


def test_synthesize_magnitudes_come_from_the_helpers():
    series = pseudo_periodic_series(days=2)
    model = ForecastModel(sign_seed=4)
    forecast = synthesize(series, 3, 60, model)
    actual, forecast1 = series.window(3, 60)
    expected = scale_error_magnitude(np.abs(one_step_rel_error(actual, forecast1)), np.arange(1, 61), model.lambda_)
    np.testing.assert_allclose(np.abs(forecast.rel_errors), expected)
