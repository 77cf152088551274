"""
Single-hidden-layer feedforward network trained by full-batch gradient descent.

Inputs and target are standardized with the training means and population
standard deviations; the hidden layer uses a bounded sigmoidal activation
and the output is linear. The loss is half the mean squared error.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from scipy.special import expit

from .errors import ModelFitError
from .tsa import DesignMatrix

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN = 8
DEFAULT_EPOCHS = 2000
DEFAULT_LEARN_RATE = 0.01
ACTIVATIONS = ("tanh", "sigmoid")
PARAM_NAMES = ("W1", "b1", "w2", "b2")


def _activate(z: np.ndarray, activation: str) -> Tuple[np.ndarray, np.ndarray]:
    """Activation values and their derivatives."""
    if activation == "tanh":
        a = np.tanh(z)
        return a, 1.0 - a ** 2
    a = expit(z)
    return a, a * (1.0 - a)


@dataclass
class MlpModel:
    column_names: Tuple[str, ...]
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float
    W1: np.ndarray  # (hidden, inputs)
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    activation: str = "tanh"
    seed: int = 0
    loss_history: List[float] = field(default_factory=list, repr=False)

    @property
    def hidden(self) -> int:
        return len(self.b1)

    def params(self) -> Dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": np.array([self.b2])}

    def to_artifact(self) -> dict:
        return {
            "model": "mlp",
            "columns": list(self.column_names),
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "W1": self.W1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
            "activation": self.activation,
            "seed": self.seed,
        }


def load_mlp(payload: dict) -> MlpModel:
    if payload.get("model") != "mlp":
        raise ModelFitError(f"Not an MLP artifact: model={payload.get('model')!r}.")
    return MlpModel(
        tuple(payload["columns"]),
        np.array(payload["x_mean"], dtype=float), np.array(payload["x_scale"], dtype=float),
        float(payload["y_mean"]), float(payload["y_scale"]),
        np.array(payload["W1"], dtype=float), np.array(payload["b1"], dtype=float),
        np.array(payload["w2"], dtype=float), float(payload["b2"]),
        payload.get("activation", "tanh"), int(payload.get("seed", 0)),
    )


def _scaled_inputs(model: MlpModel, dm: DesignMatrix) -> np.ndarray:
    return (dm.select(model.column_names).rows - model.x_mean) / model.x_scale


def loss_and_gradients(model: MlpModel, X: np.ndarray, y: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
    """Loss on standardized data and its analytic gradients by backpropagation."""
    n = len(y)
    a1, da1 = _activate(X @ model.W1.T + model.b1, model.activation)
    e = a1 @ model.w2 + model.b2 - y
    loss = 0.5 * float(e @ e) / n
    g = e / n
    dz1 = np.outer(g, model.w2) * da1
    grads = {
        "W1": dz1.T @ X,
        "b1": dz1.sum(axis=0),
        "w2": a1.T @ g,
        "b2": np.array([g.sum()]),
    }
    return loss, grads


def _standardize(dm: DesignMatrix):
    X = dm.rows
    x_mean = X.mean(axis=0)
    x_scale = X.std(axis=0)
    x_scale = np.where(x_scale > 0, x_scale, 1.0)
    y = np.asarray(dm.target, dtype=float)
    y_scale = float(y.std()) or 1.0
    return x_mean, x_scale, float(y.mean()), y_scale


def fit_mlp(
    dm: DesignMatrix,
    hidden: int = DEFAULT_HIDDEN,
    epochs: int = DEFAULT_EPOCHS,
    learn_rate: float = DEFAULT_LEARN_RATE,
    seed: int = 0,
    activation: str = "tanh",
) -> MlpModel:
    """
    Trains the network by full-batch gradient descent from a seeded initialization.

    Raises:
        ModelFitError: On invalid hyperparameters, or when the loss diverges
            (advising a smaller learning rate).
    """
    if activation not in ACTIVATIONS:
        raise ModelFitError(f"Invalid activation: {activation!r} (expected one of {ACTIVATIONS}).")
    if hidden < 1 or epochs < 0 or learn_rate <= 0:
        raise ModelFitError(f"Invalid MLP settings: hidden={hidden}, epochs={epochs}, learn_rate={learn_rate}.")
    if dm.target is None:
        raise ModelFitError("Design matrix has no target column.")

    x_mean, x_scale, y_mean, y_scale = _standardize(dm)
    rng = np.random.default_rng(seed)
    p = dm.n_cols
    model = MlpModel(
        dm.column_names, x_mean, x_scale, y_mean, y_scale,
        W1=rng.normal(0.0, 1.0 / np.sqrt(p), size=(hidden, p)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden),
        b2=0.0,
        activation=activation,
        seed=seed,
    )
    X = (dm.rows - x_mean) / x_scale
    y = (np.asarray(dm.target, dtype=float) - y_mean) / y_scale

    for epoch in range(epochs):
        loss, grads = loss_and_gradients(model, X, y)
        if not np.isfinite(loss) or loss > 1e8:
            raise ModelFitError(f"MLP training diverged at epoch {epoch} (loss {loss}); try a smaller learn_rate than {learn_rate}.")
        model.loss_history.append(loss)
        model.W1 = model.W1 - learn_rate * grads["W1"]
        model.b1 = model.b1 - learn_rate * grads["b1"]
        model.w2 = model.w2 - learn_rate * grads["w2"]
        model.b2 = model.b2 - learn_rate * float(grads["b2"][0])
    if epochs:
        logger.debug("MLP trained %d epochs, final loss %.6g", epochs, model.loss_history[-1])
    return model


def predict_mlp(model: MlpModel, dm: DesignMatrix) -> np.ndarray:
    a1, _ = _activate(_scaled_inputs(model, dm) @ model.W1.T + model.b1, model.activation)
    return model.y_mean + model.y_scale * (a1 @ model.w2 + model.b2)


def gradient_check(model: MlpModel, dm: DesignMatrix, eps: float = 1e-6) -> float:
    """Largest relative error between analytic and central finite-difference gradients."""
    X = _scaled_inputs(model, dm)
    y = (np.asarray(dm.target, dtype=float) - model.y_mean) / model.y_scale
    _, grads = loss_and_gradients(model, X, y)
    worst = 0.0
    for name in PARAM_NAMES:
        values = model.params()[name]
        flat = values.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            _set(model, name, values)
            up, _ = loss_and_gradients(model, X, y)
            flat[i] = original - eps
            _set(model, name, values)
            down, _ = loss_and_gradients(model, X, y)
            flat[i] = original
            _set(model, name, values)
            numeric = (up - down) / (2.0 * eps)
            analytic = grads[name].reshape(-1)[i]
            scale = max(abs(numeric), abs(analytic), 1e-4)
            worst = max(worst, abs(numeric - analytic) / scale)
    return worst


def _set(model: MlpModel, name: str, values: np.ndarray) -> None:
    if name == "b2":
        model.b2 = float(values[0])
    else:
        setattr(model, name, values)
