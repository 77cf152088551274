"""
CART regression tree grown by greedy variance reduction.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ModelFitError
from .tsa import DesignMatrix

logger = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 6
DEFAULT_MIN_LEAF = 5
MIN_GAIN = 1e-12


@dataclass
class CartNode:
    value: float
    n: int
    column: Optional[str] = None
    threshold: Optional[float] = None
    gain: float = 0.0
    left: Optional["CartNode"] = None
    right: Optional["CartNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.column is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value, "n": self.n}
        return {
            "value": self.value, "n": self.n, "column": self.column,
            "threshold": self.threshold, "gain": self.gain,
            "left": self.left.to_dict(), "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CartNode":
        if "column" not in data:
            return cls(float(data["value"]), int(data["n"]))
        return cls(
            float(data["value"]), int(data["n"]), data["column"], float(data["threshold"]),
            float(data["gain"]), cls.from_dict(data["left"]), cls.from_dict(data["right"]),
        )


@dataclass
class CartTree:
    root: CartNode
    column_names: Tuple[str, ...]
    max_depth: Optional[int]
    min_leaf: int

    def to_artifact(self) -> dict:
        return {
            "model": "cart",
            "columns": list(self.column_names),
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "tree": self.root.to_dict(),
        }


def load_cart(payload: dict) -> CartTree:
    if payload.get("model") != "cart":
        raise ModelFitError(f"Not a CART artifact: model={payload.get('model')!r}.")
    return CartTree(
        CartNode.from_dict(payload["tree"]), tuple(payload["columns"]),
        payload["max_depth"], int(payload["min_leaf"]),
    )


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """(column index, threshold, gain) of the largest SSE reduction, or None."""
    n = len(y)
    total = float(np.sum((y - y.mean()) ** 2))
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys ** 2)
        for i in range(min_leaf - 1, n - min_leaf):
            if xs[i] == xs[i + 1]:
                continue
            n_left, n_right = i + 1, n - i - 1
            s_left, s_right = csum[i], csum[-1] - csum[i]
            sse_left = csq[i] - s_left ** 2 / n_left
            sse_right = (csq[-1] - csq[i]) - s_right ** 2 / n_right
            gain = total - sse_left - sse_right
            if gain > MIN_GAIN * max(total, 1.0) and (best is None or gain > best[2]):
                best = (j, 0.5 * (xs[i] + xs[i + 1]), gain)
    return best


def _grow(X, y, names, depth, max_depth, min_leaf) -> CartNode:
    node = CartNode(float(np.mean(y)), len(y))
    if (max_depth is not None and depth >= max_depth) or len(y) < 2 * min_leaf:
        return node
    split = _best_split(X, y, min_leaf)
    if split is None:
        return node
    j, threshold, gain = split
    mask = X[:, j] <= threshold
    node.column, node.threshold, node.gain = names[j], float(threshold), float(gain)
    node.left = _grow(X[mask], y[mask], names, depth + 1, max_depth, min_leaf)
    node.right = _grow(X[~mask], y[~mask], names, depth + 1, max_depth, min_leaf)
    return node


def fit_cart(dm: DesignMatrix, max_depth: Optional[int] = DEFAULT_MAX_DEPTH, min_leaf: int = DEFAULT_MIN_LEAF) -> CartTree:
    """
    Grows a regression tree; each split is at the midpoint of adjacent sorted values.

    Growth stops at max_depth (None for unlimited), when a child would hold
    fewer than min_leaf rows, or when no split reduces the squared error.
    Ties go to the first column, then the lowest threshold.
    """
    if min_leaf < 1:
        raise ModelFitError(f"Invalid min_leaf: {min_leaf} must be >= 1.")
    y = np.asarray(dm.target, dtype=float)
    root = _grow(dm.rows, y, dm.column_names, 0, max_depth, min_leaf)
    tree = CartTree(root, dm.column_names, max_depth, min_leaf)
    logger.debug("CART root split: %s", root_split(tree))
    return tree


def predict_cart(tree: CartTree, dm: DesignMatrix) -> np.ndarray:
    X = dm.select(tree.column_names).rows
    out = np.empty(len(X))
    for i, row in enumerate(X):
        node = tree.root
        while not node.is_leaf:
            node = node.left if row[tree.column_names.index(node.column)] <= node.threshold else node.right
        out[i] = node.value
    return out


def root_split(tree: CartTree) -> Optional[Tuple[str, float]]:
    if tree.root.is_leaf:
        return None
    return tree.root.column, tree.root.threshold


def cart_importance(tree: CartTree) -> Dict[str, float]:
    """Total squared-error reduction credited to each column."""
    totals = {name: 0.0 for name in tree.column_names}
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if not node.is_leaf:
            totals[node.column] += node.gain
            stack += [node.left, node.right]
    return totals


def count_leaves(tree: CartTree) -> int:
    stack, leaves = [tree.root], 0
    while stack:
        node = stack.pop()
        if node.is_leaf:
            leaves += 1
        else:
            stack += [node.left, node.right]
    return leaves
