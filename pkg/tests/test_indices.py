import numpy as np
import pytest

from housing_demand.errors import IndexComputationError
from housing_demand.indices import (
    compute_indices, inverse_transform, price_elasticity, read_index_csv, write_index_csv,
)
from housing_demand.ingest import WeeklyRecord, WeeklySeries


def test_index_ratios(sample_weekly):
    """Tests HDI, SI and sqrt(HDI) against hand-computed ratios."""
    idx = compute_indices(sample_weekly)

    expected_hdi = [58 / 15850, 82 / 16153, 87 / 16410, 153 / 16637]
    expected_si = [11672 / 15850, 13250 / 16153, 13732 / 16410, 12978 / 16637]
    assert idx.hdi == pytest.approx(expected_hdi, rel=1e-10)
    assert idx.si == pytest.approx(expected_si, rel=1e-10)
    assert idx.hdi_sqrt == pytest.approx(np.sqrt(expected_hdi), rel=1e-10)
    assert list(idx.weeks) == [1, 2, 3, 4]


def test_empty_market_week_is_named():
    """Tests that a week with nothing on the market raises with its year and week."""
    records = (
        WeeklyRecord(2012, 9, 10, 1, 5, 3.0, 3.0),
        WeeklyRecord(2012, 10, 0, 0, 0, 0.0, 0.0, True),
    )
    with pytest.raises(IndexComputationError, match="2012 week 10") as excinfo:
        compute_indices(WeeklySeries(records))
    assert (excinfo.value.year, excinfo.value.week) == (2012, 10)


def test_inverse_transform():
    assert inverse_transform(0.06) == pytest.approx(0.0036)
    assert inverse_transform(np.array([0.1, 0.2])) == pytest.approx([0.01, 0.04])


@pytest.mark.parametrize("bad", [-0.1, np.nan, np.array([0.1, -1.0])])
def test_inverse_transform_rejects_negative_or_nan(bad):
    with pytest.raises(IndexComputationError, match="Invalid transformed value"):
        inverse_transform(bad)


def test_price_elasticity():
    assert price_elasticity(-0.10, 0.05) == pytest.approx(-2.0)
    with pytest.raises(IndexComputationError, match="non-zero"):
        price_elasticity(0.1, 0.0)


def test_index_csv_round_trip(tmp_path, sample_weekly):
    idx = compute_indices(sample_weekly)
    path = tmp_path / "indices.csv"
    write_index_csv(idx, path)
    loaded = read_index_csv(path)

    assert list(loaded.years) == list(idx.years)
    assert loaded.hdi == pytest.approx(idx.hdi, rel=1e-9)
    assert loaded.si == pytest.approx(idx.si, rel=1e-9)


def test_square_root_scale_round_trips():
    """Tests that squaring sqrt(HDI) recovers HDI, both for random values and a synthetic market."""
    values = np.random.default_rng(3).uniform(0.0, 0.05, size=200)
    assert inverse_transform(np.sqrt(values)) == pytest.approx(values, rel=1e-12)


def test_indices_satisfy_the_square_root_relation(synthetic_weekly):
    idx = compute_indices(synthetic_weekly)
    assert inverse_transform(idx.hdi_sqrt) == pytest.approx(idx.hdi, rel=1e-12)
    assert np.all(idx.hdi <= 1.0) and np.all(idx.hdi >= 0.0)
