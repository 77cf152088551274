import json

import numpy as np
import pytest

from housing_demand.arima import ArimaSpec, fit_regarima, forecast
from housing_demand.errors import ForecastError, ModelFitError
from housing_demand.harmonic import (
    TREND, fit_harmonic, forecast_harmonic, forecast_lagged_harmonic, harmonic_design, harmonic_xreg_future,
    lagged_harmonic_inputs, load_harmonic_fit,
)
from housing_demand.tsa import FOURIER_PERIOD, DesignMatrix, arimax_lag_spec, fourier_terms


@pytest.fixture(scope="module")
def seasonal_weeks():
    """Five years of trend + annual cycle + AR(0.3) noise on the 52.18-week period."""
    rng = np.random.default_rng(8)
    n = 260
    t = np.arange(1, n + 1)
    e = rng.normal(scale=0.2, size=n)
    noise = np.zeros(n)
    for i in range(1, n):
        noise[i] = 0.3 * noise[i - 1] + e[i]
    return 10.0 + 0.01 * t + 2.0 * np.sin(2 * np.pi * t / FOURIER_PERIOD) + noise


@pytest.fixture(scope="module")
def harmonic(seasonal_weeks):
    return fit_harmonic(seasonal_weeks, K_max=2, orders=[(1, 0), (0, 1)])


def test_design_columns():
    xreg = DesignMatrix(("SI-L5",), np.arange(5.0).reshape(-1, 1))
    design = harmonic_design(5, 2, xreg)

    assert design.column_names == (
        TREND, "SI-L5", "fourier_sin_1", "fourier_cos_1", "fourier_sin_2", "fourier_cos_2",
    )
    assert list(design.column(TREND)) == [1, 2, 3, 4, 5]


def test_fit_keeps_the_trend(harmonic):
    assert harmonic.K in (1, 2)
    assert harmonic.fit.beta[TREND] == pytest.approx(0.01, abs=0.005)
    assert harmonic.fit.spec.d == 0


def test_intervals_level_off(harmonic):
    fc = forecast_harmonic(harmonic, 20)
    assert fc.widths[19] <= 1.05 * fc.widths[9]


def test_intervals_keep_growing_under_seasonal_differencing(seasonal_weeks):
    fit = fit_regarima(seasonal_weeks, spec=ArimaSpec.parse("0,1,1:0,1,0:52"))
    widths = forecast(fit, 20).widths
    assert np.all(np.diff(widths) > 0)


def test_future_design_continues_the_sample(harmonic):
    n = harmonic.n
    future = harmonic_xreg_future(harmonic, 3)

    assert list(future.column(TREND)) == [n + 1, n + 2, n + 3]
    expected = fourier_terms(3, harmonic.K, FOURIER_PERIOD, start=n + 1)
    assert np.allclose(future.select(list(expected.column_names)).rows, expected.rows)


def test_exogenous_columns_are_required_at_forecast_time(seasonal_weeks):
    x = np.random.default_rng(1).normal(size=(len(seasonal_weeks), 1))
    hfit = fit_harmonic(seasonal_weeks, DesignMatrix(("x",), x), K_max=1, orders=[(1, 0)])

    assert hfit.exog_names == ["x"]
    with pytest.raises(ForecastError, match="Missing future regressors"):
        forecast_harmonic(hfit, 4)
    fc = forecast_harmonic(hfit, 4, DesignMatrix(("x",), np.zeros((4, 1))))
    assert fc.horizon == 4


def test_artifact_reload(harmonic):
    loaded = load_harmonic_fit(json.loads(json.dumps(harmonic.to_artifact())))

    assert (loaded.K, loaded.n) == (harmonic.K, harmonic.n)
    assert np.allclose(forecast_harmonic(loaded, 5).point, forecast_harmonic(harmonic, 5).point)
    with pytest.raises(ModelFitError, match="Not a harmonic"):
        load_harmonic_fit({"model": "regarima"})


def test_invalid_k_max(seasonal_weeks):
    with pytest.raises(ModelFitError, match="K_max"):
        fit_harmonic(seasonal_weeks, K_max=0)


def test_lagged_inputs_start_after_the_longest_lag(synthetic_indices):
    """Tests that the SI-lag design drops the first 20 weeks and numbers t from week 21."""
    y, xreg, start, target = lagged_harmonic_inputs(synthetic_indices, arimax_lag_spec(), "hdi_sqrt")

    assert start == 21
    assert target == "hdi_sqrt"
    assert y == pytest.approx(synthetic_indices.hdi_sqrt[20:])
    assert xreg.column_names == tuple(f"SI-L{k}" for k in range(5, 21))
    assert list(xreg.column("SI-L5")[:2]) == pytest.approx(synthetic_indices.si[15:17])


def test_lagged_inputs_without_a_lag_spec_are_univariate(synthetic_indices):
    y, xreg, start, target = lagged_harmonic_inputs(synthetic_indices, None, "hdi")
    assert xreg is None and start == 1 and target == "hdi"
    assert y == pytest.approx(synthetic_indices.hdi)


@pytest.fixture(scope="module")
def lagged_harmonic(synthetic_indices):
    y, xreg, start, target = lagged_harmonic_inputs(synthetic_indices, arimax_lag_spec(), "hdi_sqrt")
    return fit_harmonic(y, xreg, K_max=1, target=target, orders=[(1, 0)], start=start)


def test_late_start_keeps_the_fourier_phase(lagged_harmonic, synthetic_indices):
    """Tests that a fit starting at week 21 counts weeks from the start of the series."""
    assert lagged_harmonic.n == len(synthetic_indices)
    names = lagged_harmonic.exog_names
    future = harmonic_xreg_future(lagged_harmonic, 2, DesignMatrix(tuple(names), np.zeros((2, len(names)))))
    assert list(future.column(TREND)) == [len(synthetic_indices) + 1, len(synthetic_indices) + 2]

    design = harmonic_design(3, 1, None, FOURIER_PERIOD, start=21)
    assert list(design.column(TREND)) == [21, 22, 23]
    assert design.column("fourier_sin_1")[0] == pytest.approx(np.sin(2 * np.pi * 21 / FOURIER_PERIOD))


def test_forecast_on_lagged_si(lagged_harmonic, synthetic_indices):
    fc = forecast_lagged_harmonic(lagged_harmonic, synthetic_indices, arimax_lag_spec(), 20, fill="persistence")

    assert fc.horizon == 20
    assert fc.xreg_fill[:5] == ["known"] * 5
    assert fc.xreg_fill[5].startswith("persistence")
    assert fc.point == pytest.approx(np.maximum(fc.point_transformed, 0) ** 2)


def test_forecast_on_lagged_si_needs_the_fitted_history(lagged_harmonic, synthetic_indices):
    with pytest.raises(ForecastError, match="fitted through week"):
        forecast_lagged_harmonic(lagged_harmonic, synthetic_indices.slice(0, 150), arimax_lag_spec(), 5)
    with pytest.raises(ForecastError, match="Missing lag spec"):
        forecast_lagged_harmonic(lagged_harmonic, synthetic_indices, None, 5)
