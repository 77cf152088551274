import numpy as np
import pytest

from housing_demand.indices import IndexSeries, compute_indices
from housing_demand.ingest import WeeklyRecord, WeeklySeries
from housing_demand.synth import SynthParams, generate_events, generate_weekly
from housing_demand.tsa import DesignMatrix


@pytest.fixture
def sample_weekly():
    """Four consecutive weeks of a small sample market."""
    rows = [(11672, 58, 15850), (13250, 82, 16153), (13732, 87, 16410), (12978, 153, 16637)]
    return WeeklySeries(tuple(
        WeeklyRecord(year=2011, week=week, showings=s, sold=sold, on_market=m,
                     median_dom=60.0, mean_dom=72.5)
        for week, (s, sold, m) in enumerate(rows, start=1)
    ))


@pytest.fixture(scope="session")
def synthetic_weekly():
    """Default three-year synthetic weekly series (seed 0)."""
    weekly, _ = generate_weekly(SynthParams(seed=0))
    return weekly


@pytest.fixture(scope="session")
def synthetic_indices(synthetic_weekly) -> IndexSeries:
    return compute_indices(synthetic_weekly)


@pytest.fixture(scope="session")
def small_params():
    """A thin market that keeps event-level corpora quick to build."""
    return SynthParams(seed=3, n_weeks=60, showings_base=300.0, on_market_base=600.0, conversion_rate=0.03)


@pytest.fixture(scope="session")
def small_corpus(small_params):
    return generate_events(small_params)


@pytest.fixture
def make_design():
    """Factory for seeded random designs: y = 1 + X @ beta + noise."""
    def make(n=60, p=5, beta=None, noise=0.1, seed=0):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, p))
        beta = np.zeros(p) if beta is None else np.asarray(beta, dtype=float)
        y = 1.0 + X @ beta + noise * rng.normal(size=n)
        return DesignMatrix(tuple(f"x{j}" for j in range(p)), X, y)
    return make
