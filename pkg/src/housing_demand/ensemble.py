"""
Fixed-weight ensemble of the stepwise linear model, a CART tree and an MLP:

    HDI_EM = 0.15 * linear + 0.05 * CART + 0.80 * neural net

All three predict sqrt(HDI); the combination is taken on that scale.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .cart import CartTree, fit_cart, load_cart, predict_cart, DEFAULT_MAX_DEPTH, DEFAULT_MIN_LEAF
from .errors import EvaluationError, ModelFitError
from .evaluation import split_train_test
from .linear import LinearFit, adjusted_r2, forward_stepwise, load_linear_fit, predict, r2_score
from .mlp import MlpModel, fit_mlp, load_mlp, predict_mlp, DEFAULT_EPOCHS, DEFAULT_HIDDEN, DEFAULT_LEARN_RATE
from .tsa import DesignMatrix

logger = logging.getLogger(__name__)

DEFAULT_WEIGHTS = (0.15, 0.05, 0.80)
DEFAULT_GRID_STEP = 0.05
PROTOCOLS = ("fixed", "validation", "holdout")

Weights = Tuple[float, float, float]


def _check_weights(weights: Sequence[float]) -> Weights:
    if len(weights) != 3:
        raise ModelFitError(f"Invalid weights: expected 3 values, got {len(weights)}.")
    weights = tuple(float(w) for w in weights)
    if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-12:
        raise ModelFitError(f"Invalid weights: {weights} must be non-negative and sum to 1.")
    return weights


@dataclass
class EnsembleModel:
    linear: LinearFit
    cart: CartTree
    mlp: MlpModel
    weights: Weights = DEFAULT_WEIGHTS

    def __post_init__(self):
        self.weights = _check_weights(self.weights)

    def sub_predictions(self, dm: DesignMatrix) -> np.ndarray:
        """(3, rows) predictions of the linear, CART and MLP sub-models."""
        return np.vstack([predict(self.linear, dm), predict_cart(self.cart, dm), predict_mlp(self.mlp, dm)])

    def to_artifact(self) -> dict:
        return {
            "model": "ensemble",
            "weights": list(self.weights),
            "linear": self.linear.to_artifact(),
            "cart": self.cart.to_artifact(),
            "mlp": self.mlp.to_artifact(),
        }


def load_ensemble(payload: dict) -> EnsembleModel:
    if payload.get("model") != "ensemble":
        raise ModelFitError(f"Not an ensemble artifact: model={payload.get('model')!r}.")
    return EnsembleModel(
        load_linear_fit(payload["linear"]), load_cart(payload["cart"]),
        load_mlp(payload["mlp"]), tuple(payload["weights"]),
    )


def predict_ensemble(model: EnsembleModel, dm: DesignMatrix) -> np.ndarray:
    """w_lr * linear + w_cart * CART + w_nn * MLP, on the sqrt(HDI) scale."""
    return np.asarray(model.weights) @ model.sub_predictions(dm)


def simplex_grid(step: float = DEFAULT_GRID_STEP) -> List[Weights]:
    """All (a, b, 1 - a - b) on a lattice of the given step."""
    m = int(round(1.0 / step))
    if m < 1 or abs(m * step - 1.0) > 1e-9:
        raise EvaluationError(f"Invalid grid step: {step} must divide 1.")
    return [(i / m, j / m, (m - i - j) / m) for i in range(m + 1) for j in range(m + 1 - i)]


def tune_weights(
    preds: Sequence[Sequence[float]],
    target: Sequence[float],
    grid_step: float = DEFAULT_GRID_STEP,
    n_predictors: int = 3,
) -> Weights:
    """
    Exhaustive simplex search for the weights with the highest adjusted R^2.

    The free parameters are the three weights, so ``n_predictors`` defaults
    to 3. When the slice is too short for adjusted R^2 (n <= p + 1) the
    search ranks by plain R^2. Ties go to the triple closest to the default
    weights.
    """
    preds = np.asarray(preds, dtype=float)
    target = np.asarray(target, dtype=float)
    if preds.shape != (3, len(target)):
        raise EvaluationError(f"Expected 3 prediction vectors of length {len(target)}, got shape {preds.shape}.")
    adjust = len(target) - n_predictors - 1 > 0
    if not adjust:
        logger.warning("Adjusted R^2 undefined for n=%d, p=%d; tuning ensemble weights on R^2", len(target), n_predictors)
    default = np.asarray(DEFAULT_WEIGHTS)
    best, best_key = None, None
    candidates = simplex_grid(grid_step)
    for weights in candidates:
        score = r2_score(target, np.asarray(weights) @ preds)
        if adjust:
            score = adjusted_r2(score, len(target), n_predictors)
        key = (-round(score, 12), float(np.sum((np.asarray(weights) - default) ** 2)))
        if best_key is None or key < best_key:
            best, best_key = weights, key
    logger.info("Tuned ensemble weights %s over %d candidates (score %.4f)", best, len(candidates), -best_key[0])
    return best


def _fit_members(dm: DesignMatrix, max_depth, min_leaf, hidden, epochs, learn_rate, seed):
    return (
        forward_stepwise(dm),
        fit_cart(dm, max_depth, min_leaf),
        fit_mlp(dm, hidden, epochs, learn_rate, seed),
    )


def fit_ensemble(
    train: DesignMatrix,
    test: Optional[DesignMatrix] = None,
    protocol: str = "fixed",
    weights: Weights = DEFAULT_WEIGHTS,
    validation_fraction: float = 0.2,
    max_depth: Optional[int] = DEFAULT_MAX_DEPTH,
    min_leaf: int = DEFAULT_MIN_LEAF,
    hidden: int = DEFAULT_HIDDEN,
    epochs: int = DEFAULT_EPOCHS,
    learn_rate: float = DEFAULT_LEARN_RATE,
    grid_step: float = DEFAULT_GRID_STEP,
    seed: int = 0,
) -> EnsembleModel:
    """
    Fits the three sub-models on train and sets the combination weights.

    protocol "fixed" keeps the given weights; "validation" tunes them on a
    seeded validation split carved from train (sub-models are then refitted
    on all of train); "holdout" tunes them on the test rows.
    """
    if protocol not in PROTOCOLS:
        raise ModelFitError(f"Invalid protocol: {protocol!r} (expected one of {PROTOCOLS}).")
    members = dict(max_depth=max_depth, min_leaf=min_leaf, hidden=hidden, epochs=epochs, learn_rate=learn_rate, seed=seed)

    if protocol == "validation":
        fit_part, valid = split_train_test(train, 1.0 - validation_fraction, "random", seed)
        trial = EnsembleModel(*_fit_members(fit_part, **members))
        weights = tune_weights(trial.sub_predictions(valid), valid.target, grid_step)

    model = EnsembleModel(*_fit_members(train, **members), weights=weights)
    if protocol == "holdout":
        if test is None:
            raise ModelFitError("The 'holdout' protocol tunes on the test rows; pass test.")
        model.weights = tune_weights(model.sub_predictions(test), test.target, grid_step)
    return model
