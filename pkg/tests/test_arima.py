import json

import numpy as np
import pytest

from housing_demand.arima import (
    ArimaSpec, arimax_grid, ar_to_pacf, auto_select, default_grid, fit_regarima, forecast,
    lagged_xreg_future, load_fit, pacf_to_ar, parse_grid, psi_weights, write_forecast_csv,
)
from housing_demand.errors import ForecastError, ModelFitError
from housing_demand.tsa import DesignMatrix, LagSpec


def _ar1(n, phi, seed, sd=1.0):
    rng = np.random.default_rng(seed)
    e = sd * rng.normal(size=n + 100)
    w = np.zeros(n + 100)
    for t in range(1, n + 100):
        w[t] = phi * w[t - 1] + e[t]
    return w[100:]


@pytest.fixture
def random_walk():
    """Integrated AR(1) with coefficient 0.6, 200 weeks."""
    return np.cumsum(_ar1(200, 0.6, seed=0))


def test_spec_parsing():
    spec = ArimaSpec.parse("0,1,3:0,1,0:52")

    assert (spec.p, spec.d, spec.q, spec.P, spec.D, spec.Q, spec.s) == (0, 1, 3, 0, 1, 0, 52)
    assert spec.text() == "0,1,3:0,1,0:52"
    assert str(spec) == "ARIMA(0,1,3)(0,1,0)[52]"
    assert ArimaSpec.parse("1,1,0") == ArimaSpec(p=1, d=1)
    assert spec.n_diff == 53


@pytest.mark.parametrize("text", ["1,1", "a,b,c", "", "1,1,1:0,1"])
def test_bad_spec_text(text):
    with pytest.raises(ValueError, match="Invalid ARIMA spec"):
        ArimaSpec.parse(text)


def test_grids():
    assert len(default_grid()) == 16
    assert all(s.d == 1 and s.D == 1 for s in default_grid())
    assert len(arimax_grid()) == 16
    assert ArimaSpec.parse("3,1,1:0,1,0:52") in arimax_grid()
    assert parse_grid("0,1,1:0,1,0:52 | 1,1,0:0,1,0:52") == [
        ArimaSpec(q=1, d=1, D=1), ArimaSpec(p=1, d=1, D=1),
    ]


@pytest.mark.parametrize("seed", range(5))
def test_pacf_transform_is_stationary_and_invertible(seed):
    u = np.random.default_rng(seed).normal(scale=2.0, size=3)
    ar = pacf_to_ar(u)

    roots = np.roots(np.r_[1.0, -ar][::-1])
    assert np.all(np.abs(roots) > 1.0)
    assert ar_to_pacf(ar) == pytest.approx(u)


@pytest.mark.slow
def test_recovers_ar_coefficient_of_integrated_series():
    hits = 0
    for seed in range(20):
        y = np.cumsum(_ar1(500, 0.6, seed))
        fit = fit_regarima(y, spec=ArimaSpec(p=1, d=1))
        hits += 0.5 <= fit.ar[0] <= 0.7
    assert hits >= 18


def test_recovers_regression_coefficient():
    rng = np.random.default_rng(3)
    x = rng.normal(size=300)
    y = 2.0 * x + _ar1(300, 0.5, seed=4, sd=0.3)
    fit = fit_regarima(y, DesignMatrix(("x",), x[:, None]), ArimaSpec(p=1))

    assert fit.beta["x"] == pytest.approx(2.0, abs=0.1)
    assert "intercept" in fit.beta
    assert fit.ar[0] == pytest.approx(0.5, abs=0.2)


def test_stationary_fit_adds_an_intercept():
    y = 5.0 + _ar1(150, 0.3, seed=5, sd=0.1)
    fit = fit_regarima(y, spec=ArimaSpec(p=1))

    assert fit.has_auto_intercept
    assert fit.regressor_names == []
    assert fit.beta["intercept"] == pytest.approx(5.0, abs=0.1)
    assert forecast(fit, 3).point == pytest.approx([5.0] * 3, abs=0.2)


def test_differenced_fit_has_no_intercept(random_walk):
    assert fit_regarima(random_walk, spec=ArimaSpec(p=1, d=1)).beta == {}


def test_series_too_short():
    with pytest.raises(ModelFitError, match="too short"):
        fit_regarima(np.arange(50.0), spec=ArimaSpec(q=1, d=1, D=1))


def test_invalid_target(random_walk):
    with pytest.raises(ModelFitError, match="Invalid target"):
        fit_regarima(random_walk, spec=ArimaSpec(d=1), target="log")


def test_intervals_widen_and_are_squared_back(synthetic_indices):
    spec = ArimaSpec.parse("0,1,1:0,1,0:52")
    fit = fit_regarima(synthetic_indices.hdi_sqrt, spec=spec, target="hdi_sqrt")
    fc = forecast(fit, 20)

    assert np.all(np.diff(fc.widths) > 0)
    assert np.all(fc.lower_transformed < fc.point_transformed)
    assert np.all(fc.point_transformed < fc.upper_transformed)
    assert fc.point == pytest.approx(np.maximum(fc.point_transformed, 0) ** 2)
    assert psi_weights(fit, 3)[0] == 1.0


def test_artifact_reload_forecasts_identically(random_walk):
    fit = fit_regarima(random_walk, spec=ArimaSpec(p=1, d=1))
    loaded = load_fit(json.loads(json.dumps(fit.to_artifact())))

    assert loaded.spec == fit.spec
    assert np.allclose(forecast(loaded, 5).point, forecast(fit, 5).point)
    with pytest.raises(ModelFitError, match="Not a regression"):
        load_fit({"model": "cart"})


def test_missing_future_regressors():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(120, 2))
    y = x @ [1.0, -1.0] + 0.1 * rng.normal(size=120)
    fit = fit_regarima(y, DesignMatrix(("a", "b"), x), ArimaSpec())

    with pytest.raises(ForecastError, match="Missing future regressors"):
        forecast(fit, 2)
    with pytest.raises(ForecastError, match="Missing future regressors"):
        forecast(fit, 2, DesignMatrix(("a",), np.zeros((2, 1))))
    with pytest.raises(ForecastError, match="expected 2"):
        forecast(fit, 2, DesignMatrix(("a", "b"), np.zeros((3, 2))))
    assert forecast(fit, 2, DesignMatrix(("b", "a"), np.zeros((2, 2)))).horizon == 2


@pytest.mark.parametrize("h, level", [(0, 95), (3, 0), (3, 100)])
def test_forecast_rejects_bad_arguments(random_walk, h, level):
    fit = fit_regarima(random_walk, spec=ArimaSpec(d=1))
    with pytest.raises(ForecastError, match="Invalid"):
        forecast(fit, h, level=level)


def test_auto_select_is_thread_independent_and_records_failures(random_walk):
    grid = [ArimaSpec(d=1), ArimaSpec(p=1, d=1), ArimaSpec(q=1, d=1), ArimaSpec(d=1, D=1, s=200)]
    serial = auto_select(random_walk, grid=grid)
    threaded = auto_select(random_walk, grid=grid, n_jobs=2)

    assert serial.spec == threaded.spec
    assert serial.aicc == pytest.approx(threaded.aicc)
    assert serial.spec != ArimaSpec(d=1)
    assert "error" in serial.selection[3]
    assert all("aicc" in row for row in serial.selection[:3])


def test_auto_select_all_failures():
    with pytest.raises(ModelFitError, match="failed"):
        auto_select(np.arange(10.0), grid=[ArimaSpec(d=1, D=1)])


def test_forecast_csv(tmp_path, random_walk):
    fit = fit_regarima(random_walk, spec=ArimaSpec(p=1, d=1))
    path = tmp_path / "forecast.csv"
    write_forecast_csv(forecast(fit, 4), path)

    lines = path.read_text().splitlines()
    assert lines[0] == "step,point,lower,upper,level,xreg_fill"
    assert len(lines) == 5


@pytest.fixture
def small_lags():
    return LagSpec(si_lags=[2, 5], hdi_lags=[1], include_week_number=True)


def test_future_regressors_use_history_then_persistence(synthetic_indices, small_lags):
    idx = synthetic_indices
    n = len(idx)
    fut = lagged_xreg_future(idx, small_lags, 4, fill="persistence")
    d = fut.design

    assert d.column_names == ("SI-L2", "SI-L5", "week", "HDI-L1")
    assert d.column("SI-L2")[:2] == pytest.approx([idx.si[n - 2], idx.si[n - 1]])
    assert d.column("SI-L2")[2:] == pytest.approx([idx.si[-1]] * 2)
    assert d.column("SI-L5") == pytest.approx(idx.si[n - 5:n - 1])
    assert d.column("HDI-L1")[0] == idx.hdi[n - 1]
    assert list(d.column("week")) == [1, 2, 3, 4]
    assert fut.step_labels() == ["known", "persistence:1", "persistence:2", "persistence:2"]


def test_future_regressors_fill_si_from_a_forecast(synthetic_indices, small_lags):
    fut = lagged_xreg_future(synthetic_indices, small_lags, 4, fill="model", si_forecast=[10, 20, 30, 40])

    assert list(fut.design.column("SI-L2")[2:]) == [10, 20]
    assert fut.fill[2, 0] == "model"
    assert fut.fill[2, 3] == "persistence"


@pytest.mark.parametrize("kwargs, match", [
    ({"h": 0}, "Invalid horizon"),
    ({"fill": "zero"}, "Invalid fill"),
    ({"lag_spec": LagSpec(si_lags=[1], include_median_dom=True)}, "median_dom"),
    ({"fill": "model", "si_forecast": [1.0]}, "expected 4"),
])
def test_future_regressor_errors(synthetic_indices, small_lags, kwargs, match):
    args = {"lag_spec": small_lags, "h": 4, "fill": "persistence", **kwargs}
    with pytest.raises(ForecastError, match=match):
        lagged_xreg_future(synthetic_indices, **args)


@pytest.mark.parametrize("level", [50.0, 80.0, 95.0])
def test_back_transformed_intervals_bracket_the_point(synthetic_indices, level):
    """Tests that squaring the sqrt(HDI) forecast keeps lower <= point <= upper on the HDI scale."""
    fit = fit_regarima(synthetic_indices.hdi_sqrt, spec=ArimaSpec.parse("0,1,1:0,1,0:52"), target="hdi_sqrt")
    fc = forecast(fit, 30, level=level)

    assert np.all(fc.lower >= 0.0)
    assert np.all(fc.lower <= fc.point)
    assert np.all(fc.point <= fc.upper)
    assert fc.upper == pytest.approx(np.maximum(fc.upper_transformed, 0) ** 2)
