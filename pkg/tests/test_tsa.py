import numpy as np
import pytest
from pydantic import ValidationError

from housing_demand.errors import DesignMatrixError, TimeSeriesError
from housing_demand.tsa import (
    FOURIER_PERIOD, Decomposition, LagSpec, arimax_lag_spec, build_design_matrix, ccf_frame,
    cross_correlation, difference, fourier_terms, lasso_lag_spec, peak_week, seasonal_decompose,
    short_term_lag_spec, significance_bound, undifference,
)


@pytest.fixture
def seasonal_series():
    """Four years of level + slow trend + annual sine, with light noise."""
    t = np.arange(208)
    rng = np.random.default_rng(1)
    return 10.0 + 0.01 * t + np.sin(2 * np.pi * t / 52) + 0.05 * rng.normal(size=208)


def test_decomposition_is_additive(seasonal_series):
    """Tests that trend, seasonal and remainder add back to the series."""
    dec = seasonal_decompose(seasonal_series, 52, iterations=2)

    assert np.allclose(dec.trend + dec.seasonal + dec.remainder, dec.observed)
    assert abs(dec.profile.mean()) < 1e-12
    true_profile = np.sin(2 * np.pi * np.arange(52) / 52)
    assert np.corrcoef(dec.profile, true_profile)[0, 1] > 0.99


@pytest.mark.parametrize("n, iterations, match", [
    (100, 2, "too short"),
    (208, 0, "iterations"),
    (208, 11, "iterations"),
])
def test_decomposition_rejects_bad_input(n, iterations, match):
    with pytest.raises(TimeSeriesError, match=match):
        seasonal_decompose(np.ones(n), 52, iterations)


def test_peak_week_of_a_known_profile():
    profile = np.cos(2 * np.pi * (np.arange(52) - 29) / 52)
    zeros = np.zeros(104)
    dec = Decomposition(zeros, zeros, zeros, zeros, profile)

    assert peak_week(dec) == 30
    assert peak_week(dec, window=1) == 30
    with pytest.raises(TimeSeriesError, match="peak window"):
        peak_week(dec, window=4)


def test_cross_correlation_finds_the_shift():
    rng = np.random.default_rng(7)
    a = rng.normal(size=300)
    b = np.r_[np.zeros(3), a[:-3]]

    ccf = dict(cross_correlation(a, b, 10))
    assert sorted(ccf) == list(range(-10, 11))
    assert max(ccf, key=ccf.get) == 3
    assert ccf[3] > 0.95

    frame = ccf_frame(list(ccf.items()), len(a))
    assert frame["significance_bound"].iloc[0] == pytest.approx(2 / np.sqrt(300))
    assert significance_bound(100) == pytest.approx(0.2)


@pytest.mark.parametrize("a, b, max_lag, match", [
    (np.ones(10), np.arange(10.0), 2, "constant"),
    (np.arange(10.0), np.arange(9.0), 2, "lengths differ"),
    (np.arange(10.0), np.arange(10.0), 9, "Invalid max_lag"),
])
def test_cross_correlation_rejects_bad_input(a, b, max_lag, match):
    with pytest.raises(TimeSeriesError, match=match):
        cross_correlation(a, b, max_lag)


def test_undifference_inverts_difference():
    x = np.cumsum(np.random.default_rng(2).normal(size=40))
    w = difference(x, 1, 1, 4)

    assert len(w) == 40 - 5
    assert np.allclose(undifference(w, x[:5], 1, 1, 4), x)


def test_difference_too_short():
    with pytest.raises(TimeSeriesError, match="too short"):
        difference(np.ones(52), 0, 1, 52)


def test_lag_spec_presets():
    assert len(lasso_lag_spec().column_names()) == 35
    assert lasso_lag_spec().column_names()[:2] == ["SI-L0", "SI-L5"]
    assert short_term_lag_spec().max_lag == 10
    assert arimax_lag_spec().column_names() == [f"SI-L{k}" for k in range(5, 21)]


@pytest.mark.parametrize("kwargs", [
    {"si_lags": [5, 5]},
    {"hdi_lags": [0]},
    {"si_lags": [-1]},
    {"target_name": "log_hdi"},
    {"unknown": True},
])
def test_lag_spec_validation(kwargs):
    with pytest.raises(ValidationError):
        LagSpec(**kwargs)


def test_design_matrix_alignment(synthetic_weekly, synthetic_indices):
    """Tests that lagged columns line up with the target week and the first rows are dropped."""
    idx = synthetic_indices
    dm = build_design_matrix(idx, synthetic_weekly, lasso_lag_spec())

    assert dm.n_rows == len(idx) - 20
    assert dm.n_cols == 35
    assert dm.column("SI-L5")[0] == idx.si[15]
    assert dm.column("HDI-L20")[0] == idx.hdi[0]
    assert dm.column("median_dom")[3] == synthetic_weekly.median_dom[23]
    assert np.array_equal(dm.target, idx.hdi_sqrt[20:])
    assert dm.positions[0] == 20


def test_design_matrix_errors(synthetic_indices):
    with pytest.raises(DesignMatrixError, match="median_dom requires"):
        build_design_matrix(synthetic_indices, None, lasso_lag_spec())
    with pytest.raises(DesignMatrixError, match="Empty lag spec"):
        build_design_matrix(synthetic_indices, None, LagSpec())
    with pytest.raises(DesignMatrixError, match="does not fit"):
        build_design_matrix(synthetic_indices, None, LagSpec(si_lags=[500]))

    dm = build_design_matrix(synthetic_indices, None, arimax_lag_spec())
    with pytest.raises(DesignMatrixError, match="Missing column 'week'"):
        dm.select(["week"])


def test_fourier_terms():
    terms = fourier_terms(10, 2, start=1)

    assert terms.column_names == ("fourier_sin_1", "fourier_cos_1", "fourier_sin_2", "fourier_cos_2")
    assert terms.rows[0, 0] == pytest.approx(np.sin(2 * np.pi / FOURIER_PERIOD))
    assert terms.rows[0, 3] == pytest.approx(np.cos(4 * np.pi / FOURIER_PERIOD))
    with pytest.raises(DesignMatrixError, match="harmonics"):
        fourier_terms(10, 27)


@pytest.mark.parametrize("start", [1, 21])
def test_fourier_columns_are_orthogonal_over_a_full_period(start):
    terms = fourier_terms(52, 3, period=52, start=start)
    gram = terms.rows.T @ terms.rows
    assert gram == pytest.approx(26.0 * np.eye(6), abs=1e-9)
