import json

import numpy as np
import pytest

from housing_demand.cart import (
    cart_importance, count_leaves, fit_cart, load_cart, predict_cart, root_split,
)
from housing_demand.errors import ModelFitError
from housing_demand.tsa import DesignMatrix


@pytest.fixture
def step_design():
    """y jumps from 0 to 1 between x = 49 and x = 50; the second column is constant."""
    x = np.arange(100.0)
    rows = np.column_stack([x, np.full(100, 7.0)])
    return DesignMatrix(("x", "flat"), rows, (x > 49).astype(float))


def test_step_is_split_at_the_midpoint(step_design):
    """Tests that a step function is split once, halfway between the neighbouring x values."""
    tree = fit_cart(step_design)

    assert root_split(tree) == ("x", 49.5)
    assert count_leaves(tree) == 2
    assert np.array_equal(predict_cart(tree, step_design), step_design.target)


def test_min_leaf_limits_the_split():
    x = np.arange(10.0)
    y = np.r_[10.0, np.zeros(9)]
    tree = fit_cart(DesignMatrix(("x",), x[:, None], y), min_leaf=5)

    assert root_split(tree) == ("x", 4.5)
    assert tree.root.left.n == tree.root.right.n == 5
    assert count_leaves(tree) == 2


def test_depth_zero_is_the_mean(step_design):
    """Tests that a depth-0 tree predicts the training mean."""
    tree = fit_cart(step_design, max_depth=0)

    assert root_split(tree) is None
    assert np.allclose(predict_cart(tree, step_design), 0.5)


def test_importance_credits_the_split_column(step_design):
    importance = cart_importance(fit_cart(step_design))

    assert importance["x"] == pytest.approx(25.0)
    assert importance["flat"] == 0.0


def test_artifact_reload(step_design):
    rng = np.random.default_rng(0)
    dm = DesignMatrix(("a", "b"), rng.normal(size=(80, 2)), rng.normal(size=80))
    tree = fit_cart(dm, max_depth=3)
    loaded = load_cart(json.loads(json.dumps(tree.to_artifact())))

    assert count_leaves(loaded) == count_leaves(tree)
    assert np.array_equal(predict_cart(loaded, dm), predict_cart(tree, dm))
    with pytest.raises(ModelFitError, match="Not a CART"):
        load_cart({"model": "mlp"})


def test_invalid_min_leaf(step_design):
    with pytest.raises(ModelFitError, match="Invalid min_leaf"):
        fit_cart(step_design, min_leaf=0)
