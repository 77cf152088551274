import json

import numpy as np
import pytest

from housing_demand.ensemble import (
    DEFAULT_WEIGHTS, EnsembleModel, fit_ensemble, load_ensemble, predict_ensemble, simplex_grid,
    tune_weights,
)
from housing_demand.errors import EvaluationError, ModelFitError
from housing_demand.evaluation import split_train_test
from housing_demand.tsa import DesignMatrix, build_design_matrix, lasso_lag_spec

QUICK = {"epochs": 200, "hidden": 4}


@pytest.fixture(scope="module")
def design_pair():
    """Train and test designs drawn from the same linear model."""
    rng = np.random.default_rng(4)

    def draw(n):
        X = rng.normal(size=(n, 4))
        y = 1.0 + X @ [0.5, -0.3, 0.0, 0.2] + 0.1 * rng.normal(size=n)
        return DesignMatrix(("x0", "x1", "x2", "x3"), X, y)
    return draw(80), draw(30)


@pytest.fixture(scope="module")
def fixed_model(design_pair):
    return fit_ensemble(design_pair[0], **QUICK)


def test_default_weights(fixed_model):
    assert fixed_model.weights == DEFAULT_WEIGHTS


def test_combination_is_convex(fixed_model):
    rows = np.random.default_rng(5).normal(scale=2.0, size=(1000, 4))
    dm = DesignMatrix(("x0", "x1", "x2", "x3"), rows)
    subs = fixed_model.sub_predictions(dm)
    combined = predict_ensemble(fixed_model, dm)

    assert np.all(combined >= subs.min(axis=0) - 1e-12)
    assert np.all(combined <= subs.max(axis=0) + 1e-12)
    assert np.allclose(combined, 0.15 * subs[0] + 0.05 * subs[1] + 0.80 * subs[2])


@pytest.mark.parametrize("weights", [(0.5, 0.5), (0.6, 0.6, -0.2), (0.3, 0.3, 0.3)])
def test_bad_weights_are_rejected(fixed_model, weights):
    with pytest.raises(ModelFitError, match="Invalid weights"):
        EnsembleModel(fixed_model.linear, fixed_model.cart, fixed_model.mlp, weights)


def test_simplex_grid():
    grid = simplex_grid(0.05)

    assert len(grid) == 231
    assert all(abs(sum(w) - 1.0) < 1e-12 and min(w) >= 0 for w in grid)
    with pytest.raises(EvaluationError, match="grid step"):
        simplex_grid(0.3)


def test_tuning_finds_a_perfect_predictor():
    rng = np.random.default_rng(6)
    target = rng.normal(size=50)
    preds = [rng.normal(size=50), rng.normal(size=50), target]
    assert tune_weights(preds, target) == pytest.approx((0.0, 0.0, 1.0))


def test_tuning_ties_go_to_the_default_weights():
    shared = np.random.default_rng(7).normal(size=50)
    target = shared + 0.1
    assert tune_weights([shared, shared, shared], target) == pytest.approx(DEFAULT_WEIGHTS)


def test_tuning_shape_check():
    with pytest.raises(EvaluationError, match="Expected 3"):
        tune_weights([[1.0, 2.0]] * 2, [1.0, 2.0])


def test_protocol_errors(design_pair):
    train, _ = design_pair
    with pytest.raises(ModelFitError, match="Invalid protocol"):
        fit_ensemble(train, protocol="oracle")
    with pytest.raises(ModelFitError, match="pass test"):
        fit_ensemble(train, protocol="holdout", **QUICK)


@pytest.mark.parametrize("protocol", ["validation", "holdout"])
def test_tuned_weights_lie_on_the_grid(design_pair, protocol):
    train, test = design_pair
    model = fit_ensemble(train, test, protocol=protocol, **QUICK)

    assert any(np.allclose(model.weights, w) for w in simplex_grid(0.05))
    assert model.mlp.loss_history


def test_artifact_reload(fixed_model, design_pair):
    _, test = design_pair
    loaded = load_ensemble(json.loads(json.dumps(fixed_model.to_artifact())))

    assert loaded.weights == fixed_model.weights
    assert np.allclose(predict_ensemble(loaded, test), predict_ensemble(fixed_model, test))
    with pytest.raises(ModelFitError, match="Not an ensemble"):
        load_ensemble({"model": "lasso"})


@pytest.mark.parametrize("n", [3, 4])
def test_tuning_on_a_tiny_slice_ranks_by_r2(n):
    """Tests that a slice too short for adjusted R^2 still yields weights."""
    target = np.arange(1.0, n + 1)
    preds = [np.zeros(n), target[::-1].copy(), target]
    assert tune_weights(preds, target) == pytest.approx((0.0, 0.0, 1.0))


def test_validation_tuning_on_the_wide_lagged_design(synthetic_weekly, synthetic_indices):
    """Tests that the 35-column design tunes weights on a validation slice shorter than its width."""
    dm = build_design_matrix(synthetic_indices, synthetic_weekly, lasso_lag_spec())
    train, test = split_train_test(dm, 0.8, "random", seed=0)
    assert round(0.2 * train.n_rows) < train.n_cols

    model = fit_ensemble(train, test, protocol="validation", epochs=50, hidden=4)
    assert any(np.allclose(model.weights, w) for w in simplex_grid(0.05))
    assert predict_ensemble(model, test).shape == (test.n_rows,)
