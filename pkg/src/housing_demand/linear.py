"""
Ordinary least squares and forward stepwise regression of sqrt(HDI) on lagged predictors.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg, stats

from .errors import DesignMatrixError, EvaluationError, ModelFitError
from .tsa import DesignMatrix

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10
DEFAULT_ALPHA = 0.05


@dataclass
class LinearFit:
    intercept: float
    coefficients: Dict[str, float]
    residuals: np.ndarray
    r2: float
    adj_r2: float
    n: int
    p: int
    std_errors: Dict[str, float] = field(default_factory=dict)
    t_values: Dict[str, float] = field(default_factory=dict)
    p_values: Dict[str, float] = field(default_factory=dict)
    selection_order: List[str] = field(default_factory=list)
    model: str = "ols"
    criterion: Optional[str] = None

    @property
    def column_names(self) -> List[str]:
        return list(self.coefficients)

    @property
    def rss(self) -> float:
        return float(self.residuals @ self.residuals)

    def aic(self) -> float:
        return gaussian_aic(self.rss, self.n, self.p)

    def to_artifact(self) -> dict:
        return {
            "model": self.model,
            "criterion": self.criterion,
            "intercept": self.intercept,
            "coefficients": dict(self.coefficients),
            "std_errors": dict(self.std_errors),
            "p_values": dict(self.p_values),
            "selection_order": list(self.selection_order),
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "n": self.n,
            "p": self.p,
        }


def load_linear_fit(payload: dict) -> LinearFit:
    """Rebuilds a fit from its artifact; residuals are not stored and come back empty."""
    return LinearFit(
        intercept=float(payload["intercept"]),
        coefficients={k: float(v) for k, v in payload["coefficients"].items()},
        residuals=np.zeros(0),
        r2=float(payload["r2"]),
        adj_r2=float(payload["adj_r2"]),
        n=int(payload["n"]),
        p=int(payload["p"]),
        std_errors=dict(payload.get("std_errors", {})),
        p_values=dict(payload.get("p_values", {})),
        selection_order=list(payload.get("selection_order", [])),
        model=payload.get("model", "ols"),
        criterion=payload.get("criterion"),
    )


def r2_score(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """1 - SSE/SST; a constant target has R^2 = 0."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if len(actual) != len(predicted):
        raise EvaluationError(f"Length mismatch: {len(actual)} actuals vs {len(predicted)} predictions.")
    sst = float(np.sum((actual - actual.mean()) ** 2))
    if sst == 0.0:
        return 0.0
    return 1.0 - float(np.sum((actual - predicted) ** 2)) / sst


def adjusted_r2(r2: float, n: int, p: int) -> float:
    """1 - (1 - r2)(n - 1)/(n - p - 1)."""
    if n - p - 1 <= 0:
        raise EvaluationError(f"Adjusted R^2 undefined for n={n}, p={p}.")
    return 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)


def gaussian_aic(rss: float, n: int, p: int) -> float:
    """AIC of a Gaussian linear model with p predictors plus intercept (constants dropped)."""
    return n * np.log(max(rss / n, np.finfo(float).tiny)) + 2 * (p + 1)


def _dependent_columns(names: Sequence[str], rows: np.ndarray) -> List[str]:
    """Names of the columns a pivoted QR finds linearly dependent on the rest (intercept included)."""
    X = np.column_stack([np.ones(rows.shape[0]), rows])
    _, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOLERANCE * diag[0])) if diag.size else 0
    labels = ["intercept"] + list(names)
    return [labels[j] for j in piv[rank:]]


def ols_fit(dm: DesignMatrix) -> LinearFit:
    """
    Fits y = intercept + X beta by least squares using a pivoted QR decomposition.

    Raises:
        ModelFitError: If there are too few rows or the design is rank deficient;
            the error names the dependent columns.
    """
    if dm.target is None:
        raise ModelFitError("Design matrix has no target column.")
    n, p = dm.rows.shape
    if n <= p + 1:
        raise ModelFitError(f"Too few rows: {n} rows for {p} predictors plus intercept.")
    y = np.asarray(dm.target, dtype=float)
    X = np.column_stack([np.ones(n), dm.rows])

    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOLERANCE * diag[0]))
    if rank < p + 1:
        dependent = _dependent_columns(dm.column_names, dm.rows)
        raise ModelFitError(f"Rank-deficient design: columns {dependent} are linearly dependent.", columns=dependent)

    beta = np.empty(p + 1)
    beta[piv] = linalg.solve_triangular(R, Q.T @ y)
    fitted = X @ beta
    residuals = y - fitted

    df = n - p - 1
    rss = float(residuals @ residuals)
    sigma2 = rss / df
    r_inv = linalg.solve_triangular(R, np.eye(p + 1))
    var = np.empty(p + 1)
    var[piv] = np.sum(r_inv ** 2, axis=1) * sigma2
    se = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_values = np.where(se > 0, beta / se, np.inf)
    p_values = 2.0 * stats.t.sf(np.abs(t_values), df)

    r2 = min(max(r2_score(y, fitted), 0.0), 1.0)
    names = list(dm.column_names)
    return LinearFit(
        intercept=float(beta[0]),
        coefficients=dict(zip(names, map(float, beta[1:]))),
        residuals=residuals,
        r2=r2,
        adj_r2=adjusted_r2(r2, n, p),
        n=n,
        p=p,
        std_errors=dict(zip(names, map(float, se[1:]))),
        t_values=dict(zip(names, map(float, t_values[1:]))),
        p_values=dict(zip(names, map(float, p_values[1:]))),
        selection_order=names,
    )


def _intercept_only(dm: DesignMatrix) -> LinearFit:
    y = np.asarray(dm.target, dtype=float)
    residuals = y - y.mean()
    return LinearFit(float(y.mean()), {}, residuals, 0.0, 0.0, len(y), 0)


def _try_candidate(dm: DesignMatrix, names: List[str]) -> Optional[LinearFit]:
    try:
        return ols_fit(dm.select(names))
    except ModelFitError:
        return None


def forward_stepwise(
    dm: DesignMatrix,
    criterion: str = "aic",
    alpha: float = DEFAULT_ALPHA,
    n_jobs: int = 1,
) -> LinearFit:
    """
    Forward stepwise selection starting from the intercept-only model.

    Each step adds the candidate with the lowest AIC (criterion "aic", stop
    when AIC no longer improves) or the lowest coefficient p-value (criterion
    "pvalue", stop when no candidate has p < alpha). Ties go to the lowest
    column index.

    Returns:
        LinearFit: OLS fit on the selected columns, with selection_order set.
    """
    if criterion not in ("aic", "pvalue"):
        raise ModelFitError(f"Invalid criterion: {criterion!r} (expected 'aic' or 'pvalue').")
    if dm.target is None:
        raise ModelFitError("Design matrix has no target column.")

    selected: List[str] = []
    current = _intercept_only(dm)
    current_aic = current.aic()
    candidates = list(dm.column_names)

    while candidates and dm.n_rows > len(selected) + 2:
        trials = [selected + [name] for name in candidates]
        fits = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_try_candidate)(dm, names) for names in trials
        )
        best_name, best_fit, best_score = None, None, np.inf
        for name, fit in zip(candidates, fits):
            if fit is None:
                continue
            score = fit.aic() if criterion == "aic" else fit.p_values[name]
            if score < best_score:
                best_name, best_fit, best_score = name, fit, score
        if best_fit is None:
            break
        if criterion == "aic" and not best_score < current_aic:
            break
        if criterion == "pvalue" and not best_score < alpha:
            break
        logger.debug("Stepwise: added %s (%s=%.6g)", best_name, criterion, best_score)
        selected.append(best_name)
        candidates.remove(best_name)
        current, current_aic = best_fit, best_fit.aic()

    if not selected:
        fit = current
    else:
        ordered = [name for name in dm.column_names if name in selected]
        fit = ols_fit(dm.select(ordered))
    fit.selection_order = selected
    fit.model = "stepwise"
    fit.criterion = criterion
    logger.info("Stepwise (%s) selected %d of %d predictors: %s", criterion, len(selected), dm.n_cols, selected)
    return fit


def predict(fit: LinearFit, dm: DesignMatrix) -> np.ndarray:
    """Predictions on the sqrt(HDI) scale: intercept + sum of beta_k x_k."""
    if not fit.coefficients:
        return np.full(dm.n_rows, fit.intercept)
    try:
        X = dm.select(fit.column_names).rows
    except DesignMatrixError as e:
        raise DesignMatrixError(f"Cannot predict: {e}")
    beta = np.array(list(fit.coefficients.values()))
    return fit.intercept + X @ beta
