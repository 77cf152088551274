"""
Lasso and least angle regression (LAR) coefficient paths.

The penalty is expressed in its dual form: at a given lambda every active
predictor has |x_j'r| = lambda on the standardized scale, so the path solves

    min  1/2 ||y - X b||^2 + lambda ||b||_1

for every lambda at once. Columns are centered and scaled by their population
standard deviation; the target is centered.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .errors import ConvergenceError, EvaluationError, ModelFitError
from .evaluation import demand_scale, mape
from .io_utils import atomic_write_text
from .tsa import DesignMatrix

logger = logging.getLogger(__name__)

MODES = ("lar", "lasso")
CD_TOLERANCE = 1e-10
CD_MAX_SWEEPS = 100_000


@dataclass(frozen=True)
class Standardization:
    means: np.ndarray
    scales: np.ndarray
    y_mean: float


@dataclass
class LarPath:
    column_names: Tuple[str, ...]
    mode: str
    lambdas: np.ndarray
    coefs: np.ndarray  # (breakpoints, p) on the standardized scale
    active_sets: List[Tuple[str, ...]]
    events: List[str]
    standardization: Standardization

    def __len__(self) -> int:
        return len(self.lambdas)


@dataclass
class LassoCoefficients:
    intercept: float
    coefficients: Dict[str, float]
    standardized: np.ndarray = field(repr=False, default=None)
    lam: Optional[float] = None

    def predict(self, dm: DesignMatrix) -> np.ndarray:
        X = dm.select(list(self.coefficients)).rows
        return self.intercept + X @ np.array(list(self.coefficients.values()))

    def to_artifact(self) -> dict:
        return {"model": "lasso", "lambda": self.lam, "intercept": self.intercept,
                "coefficients": dict(self.coefficients)}


def _standardize(dm: DesignMatrix) -> Tuple[np.ndarray, np.ndarray, Standardization]:
    if dm.target is None:
        raise ModelFitError("Design matrix has no target column.")
    if dm.n_rows < 2:
        raise ModelFitError(f"Too few rows: {dm.n_rows}, need at least 2.")
    X = dm.rows
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    flat = [name for name, s in zip(dm.column_names, scales) if s == 0]
    if flat:
        raise ModelFitError(f"Constant column(s) {flat} cannot be standardized.", columns=flat)
    y = np.asarray(dm.target, dtype=float)
    std = Standardization(means, scales, float(y.mean()))
    return (X - means) / scales, y - std.y_mean, std


def _unstandardize(b: np.ndarray, names: Sequence[str], std: Standardization, lam=None) -> LassoCoefficients:
    beta = b / std.scales
    intercept = std.y_mean - float(beta @ std.means)
    return LassoCoefficients(intercept, dict(zip(names, map(float, beta))), b.copy(), lam)


def lar_path(dm: DesignMatrix, mode: str = "lasso") -> LarPath:
    """
    Computes the full LAR or lasso path by equiangular moves.

    Each step moves the active coefficients along the direction that keeps
    their correlations with the residual tied, until an inactive predictor
    ties them (it joins) or, in lasso mode, an active coefficient reaches
    zero (it is dropped). The path ends at lambda = 0.

    Raises:
        ModelFitError: On a constant column (named in the error).
    """
    if mode not in MODES:
        raise ModelFitError(f"Invalid mode: {mode!r} (expected one of {MODES}).")
    X, y, std = _standardize(dm)
    names = dm.column_names
    n, p = X.shape
    max_active = min(n - 1, p)

    beta = np.zeros(p)
    corr = X.T @ y
    lam = float(np.max(np.abs(corr)))
    eps = 1e-12 * max(lam, 1.0)
    lambdas, coefs, actives, events = [lam], [beta.copy()], [()], ["start"]
    active: List[int] = []
    if lam <= eps:
        return LarPath(names, mode, np.array(lambdas), np.array(coefs), actives, events, std)

    active.append(int(np.argmax(np.abs(corr))))
    events[-1] = f"add {names[active[0]]}"
    while lam > eps:
        corr = X.T @ (y - X @ beta)
        signs = np.sign(corr[active])
        XA = X[:, active]
        direction = np.linalg.solve(XA.T @ XA, signs)
        rate = X.T @ (XA @ direction)

        gamma, event, index = lam, "end", None
        if len(active) < max_active:
            for j in range(p):
                if j in active:
                    continue
                for num, den in ((lam - corr[j], 1.0 - rate[j]), (lam + corr[j], 1.0 + rate[j])):
                    if abs(den) < 1e-15:
                        continue
                    g = num / den
                    if eps < g < gamma:
                        gamma, event, index = g, "add", j
        if mode == "lasso":
            for pos, j in enumerate(active):
                if direction[pos] == 0:
                    continue
                g = -beta[j] / direction[pos]
                if eps < g < gamma:
                    gamma, event, index = g, "drop", j

        if event == "end":
            beta[active] += np.linalg.solve(XA.T @ XA, corr[active])
            lam = 0.0
        else:
            beta[active] += gamma * direction
            lam = lam - gamma
        if event == "drop":
            beta[index] = 0.0
            active.remove(index)
        elif event == "add":
            active.append(index)
        lambdas.append(lam)
        coefs.append(beta.copy())
        actives.append(tuple(names[j] for j in active))
        events.append(event if index is None else f"{event} {names[index]}")
        logger.debug("LAR step %d: %s at lambda=%.6g", len(lambdas) - 1, events[-1], lam)
        if event == "end":
            break

    logger.info("%s path: %d breakpoints over %d predictors", mode.upper(), len(lambdas), p)
    return LarPath(names, mode, np.array(lambdas), np.array(coefs), actives, events, std)


def _standardized_at(path: LarPath, lam: float) -> np.ndarray:
    lambdas = path.lambdas
    if lam >= lambdas[0]:
        return np.zeros(path.coefs.shape[1])
    if lam <= lambdas[-1]:
        return path.coefs[-1].copy()
    k = int(np.searchsorted(-lambdas, -lam, side="right")) - 1
    hi, lo = lambdas[k], lambdas[k + 1]
    w = (hi - lam) / (hi - lo)
    return (1.0 - w) * path.coefs[k] + w * path.coefs[k + 1]


def coefficients_at(path: LarPath, lam: float) -> LassoCoefficients:
    """Coefficients at penalty lambda on the original column scales (linear interpolation)."""
    if lam < 0:
        raise ModelFitError(f"Invalid lambda: {lam} must be >= 0.")
    return _unstandardize(_standardized_at(path, lam), path.column_names, path.standardization, lam)


def cd_lasso(dm: DesignMatrix, lam: float, tol: float = CD_TOLERANCE, max_sweeps: int = CD_MAX_SWEEPS) -> LassoCoefficients:
    """
    Cyclic coordinate descent on 1/2 ||y - X b||^2 + lambda ||b||_1 (standardized scale).

    Raises:
        ConvergenceError: If the largest coefficient change is still above tol
            after max_sweeps sweeps.
    """
    if lam < 0:
        raise ModelFitError(f"Invalid lambda: {lam} must be >= 0.")
    X, y, std = _standardize(dm)
    n, p = X.shape
    col_sq = np.sum(X ** 2, axis=0)
    beta = np.zeros(p)
    resid = y.copy()
    for sweep in range(max_sweeps):
        max_change = 0.0
        for j in range(p):
            old = beta[j]
            rho = X[:, j] @ resid + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            if new != old:
                resid -= X[:, j] * (new - old)
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tol:
            logger.debug("Coordinate descent converged after %d sweeps", sweep + 1)
            return _unstandardize(beta, dm.column_names, std, lam)
    raise ConvergenceError(
        f"Coordinate descent did not converge in {max_sweeps} sweeps (last change {max_change:.3g}).",
        trace=[f"sweep {max_sweeps}: max change {max_change:.3g}"],
    )


def path_importance(path: LarPath, top: Optional[int] = None) -> List[str]:
    """Predictors in the order they first become active along the path."""
    order: List[str] = []
    for event in path.events:
        kind, _, name = event.partition(" ")
        if kind == "add" and name not in order:
            order.append(name)
    return order if top is None else order[:top]


def _fold_mapes(dm: DesignMatrix, mode: str, fractions: np.ndarray, train_end: int, test_end: int) -> np.ndarray:
    train = dm.take(np.arange(train_end))
    test = dm.take(np.arange(train_end, test_end))
    path = lar_path(train, mode)
    actual = demand_scale(test.target, test.target_name)
    out = np.empty(len(fractions))
    for i, frac in enumerate(fractions):
        coefs = coefficients_at(path, frac * path.lambdas[0])
        out[i] = mape(actual, demand_scale(coefs.predict(test), test.target_name))
    return out


def select_lambda_by_cv(
    dm: DesignMatrix,
    mode: str = "lasso",
    n_folds: int = 5,
    min_train: Optional[int] = None,
    n_jobs: int = 1,
) -> Tuple[float, pd.DataFrame]:
    """
    Picks lambda by rolling-origin cross-validation MAPE on the HDI scale.

    Candidates are the breakpoints of the full-data path, expressed as a
    fraction of its entry lambda so they transfer to every training window.
    Each fold trains on rows [0, m) and tests on the next block.

    Returns:
        (lambda on the full-data path, table of candidate fraction, lambda and mean MAPE)
    """
    n = dm.n_rows
    min_train = min_train if min_train is not None else n // 2
    block = (n - min_train) // n_folds
    if n_folds < 1 or block < 1:
        raise EvaluationError(f"Cannot make {n_folds} folds after {min_train} training rows of {n}.")

    full = lar_path(dm, mode)
    fractions = full.lambdas / full.lambdas[0]
    ends = [min_train + i * block for i in range(n_folds)]
    scores = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_fold_mapes)(dm, mode, fractions, end, end + block) for end in ends
    )
    mean_mape = np.mean(np.vstack(scores), axis=0)
    best = int(np.argmin(mean_mape))
    table = pd.DataFrame({"fraction": fractions, "lambda": full.lambdas, "cv_mape": mean_mape})
    logger.info("CV selected lambda=%.6g (fraction %.4f, MAPE %.3f%%)", full.lambdas[best], fractions[best], mean_mape[best])
    return float(full.lambdas[best]), table


def path_frame(path: LarPath) -> pd.DataFrame:
    rows = []
    for step, lam in enumerate(path.lambdas):
        coefs = _unstandardize(path.coefs[step], path.column_names, path.standardization)
        row = {
            "step": step,
            "lambda": lam,
            "active_set": ";".join(path.active_sets[step]),
            "l1_norm": float(np.sum(np.abs(list(coefs.coefficients.values())))),
        }
        row.update({f"coef_{name}": value for name, value in coefs.coefficients.items()})
        rows.append(row)
    return pd.DataFrame(rows)


def write_path_csv(path: LarPath, out) -> None:
    atomic_write_text(out, path_frame(path).to_csv(index=False, float_format="%.10g", lineterminator="\n"))


def check_kkt(path: LarPath, dm: DesignMatrix, tol: float = 1e-8) -> bool:
    """True if every breakpoint satisfies the lasso optimality conditions."""
    X, y, _ = _standardize(dm)
    index = {name: j for j, name in enumerate(path.column_names)}
    for lam, b, act in zip(path.lambdas, path.coefs, path.active_sets):
        corr = X.T @ (y - X @ b)
        active = [index[name] for name in act]
        inactive = [j for j in range(len(b)) if j not in active]
        for j in active:
            if b[j] != 0 and abs(corr[j] - lam * np.sign(b[j])) > tol * max(1.0, lam):
                return False
        if inactive and np.max(np.abs(corr[inactive])) > lam + tol * max(1.0, lam):
            return False
    return True


def load_lasso_coefficients(payload: dict) -> LassoCoefficients:
    if payload.get("model") != "lasso":
        raise ModelFitError(f"Not a lasso artifact: model={payload.get('model')!r}.")
    return LassoCoefficients(
        float(payload["intercept"]),
        {k: float(v) for k, v in payload["coefficients"].items()},
        None,
        payload.get("lambda"),
    )
