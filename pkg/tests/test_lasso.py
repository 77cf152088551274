import numpy as np
import pandas as pd
import pytest
from scipy.linalg import hadamard

from housing_demand.errors import ModelFitError
from housing_demand.lasso import (
    cd_lasso, check_kkt, coefficients_at, lar_path, load_lasso_coefficients, path_frame,
    path_importance, select_lambda_by_cv, write_path_csv,
)
from housing_demand.linear import ols_fit
from housing_demand.tsa import DesignMatrix


@pytest.fixture
def sparse_problem(make_design):
    """Factory for the n=50, p=10 problems with three active predictors."""
    def make(seed):
        return make_design(n=50, p=10, beta=[3, 0, -2, 0, 0, 1.5, 0, 0, 0, 0], noise=1.0, seed=seed)
    return make


@pytest.mark.parametrize("seed", range(20))
def test_path_matches_coordinate_descent(sparse_problem, seed):
    dm = sparse_problem(seed)
    path = lar_path(dm, "lasso")

    assert check_kkt(path, dm)
    for frac in np.linspace(0.02, 0.98, 20):
        lam = frac * path.lambdas[0]
        on_path = coefficients_at(path, lam)
        by_cd = cd_lasso(dm, lam)
        assert np.max(np.abs(on_path.standardized - by_cd.standardized)) < 1e-6


def test_path_ends_at_least_squares(sparse_problem):
    dm = sparse_problem(0)
    for mode in ("lar", "lasso"):
        end = coefficients_at(lar_path(dm, mode), 0.0)
        ols = ols_fit(dm)
        assert end.intercept == pytest.approx(ols.intercept, abs=1e-8)
        assert end.coefficients == pytest.approx(ols.coefficients, abs=1e-8)


def test_lar_adds_one_predictor_per_step(sparse_problem):
    path = lar_path(sparse_problem(1), "lar")

    assert [len(a) for a in path.active_sets] == [0] + list(range(2, 11)) + [10]
    assert path.events[-1] == "end"
    assert path.lambdas[-1] == 0.0
    assert np.all(np.diff(path.lambdas) < 0)


def test_importance_starts_with_the_strongest_predictor(sparse_problem):
    order = path_importance(lar_path(sparse_problem(2)), top=3)
    assert order[0] == "x0"
    assert set(order) == {"x0", "x2", "x5"}


def test_above_entry_lambda_everything_is_zero(sparse_problem):
    path = lar_path(sparse_problem(3))
    coefs = coefficients_at(path, 2 * path.lambdas[0])
    assert all(v == 0 for v in coefs.coefficients.values())
    assert coefs.intercept == pytest.approx(np.mean(sparse_problem(3).target))


def test_constant_column_is_named():
    rng = np.random.default_rng(0)
    rows = np.column_stack([rng.normal(size=20), np.full(20, 4.0)])
    dm = DesignMatrix(("x0", "flat"), rows, rng.normal(size=20))
    with pytest.raises(ModelFitError, match="Constant column") as excinfo:
        lar_path(dm)
    assert excinfo.value.columns == ["flat"]


@pytest.mark.parametrize("call", [
    lambda path, dm: coefficients_at(path, -1.0),
    lambda path, dm: cd_lasso(dm, -1.0),
    lambda path, dm: lar_path(dm, "ridge"),
])
def test_invalid_arguments(sparse_problem, call):
    dm = sparse_problem(0)
    with pytest.raises(ModelFitError, match="Invalid"):
        call(lar_path(dm), dm)


def test_cv_picks_a_breakpoint(sparse_problem):
    dm = sparse_problem(4)
    dm = dm.with_target(np.abs(dm.target) + 1.0)
    lam, table = select_lambda_by_cv(dm, "lasso", n_folds=4, min_train=30)

    assert lam in set(table["lambda"])
    assert list(table.columns) == ["fraction", "lambda", "cv_mape"]
    assert table["cv_mape"].notna().all()


def test_path_csv_and_artifact(tmp_path, sparse_problem):
    dm = sparse_problem(5)
    path = lar_path(dm)
    out = tmp_path / "path.csv"
    write_path_csv(path, out)
    frame = pd.read_csv(out)

    assert list(frame.columns[:4]) == ["step", "lambda", "active_set", "l1_norm"]
    assert len(frame) == len(path) == len(path_frame(path))

    coefs = coefficients_at(path, 0.3 * path.lambdas[0])
    loaded = load_lasso_coefficients(coefs.to_artifact())
    assert np.allclose(loaded.predict(dm), coefs.predict(dm))


def test_orthonormal_design_soft_thresholds_least_squares():
    """Tests that on orthogonal standardized columns each lasso coefficient is the soft-thresholded OLS one."""
    rng = np.random.default_rng(8)
    X = hadamard(16)[:, 1:5].astype(float)
    y = 0.5 + X @ [1.0, -0.6, 0.3, 0.0] + 0.2 * rng.normal(size=16)
    dm = DesignMatrix(("a", "b", "c", "d"), X, y)
    path = lar_path(dm, "lasso")
    ols = X.T @ (y - y.mean()) / 16

    for frac in (0.1, 0.4, 0.8):
        lam = frac * path.lambdas[0]
        expected = np.sign(ols) * np.maximum(np.abs(ols) - lam / 16, 0.0)
        assert coefficients_at(path, lam).standardized == pytest.approx(expected, abs=1e-9)
        assert cd_lasso(dm, lam).standardized == pytest.approx(expected, abs=1e-8)
