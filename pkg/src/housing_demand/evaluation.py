"""
Train/test splits, k-fold and rolling-origin cross-validation, MAPE and naive baselines.

All MAPEs are computed on the HDI scale: models usually predict sqrt(HDI), and
``demand_scale`` squares predictions (floored at zero) before scoring unless
the design matrix targets HDI directly.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .errors import EvaluationError, HousingDemandError
from .indices import inverse_transform
from .linear import adjusted_r2, r2_score
from .tsa import DesignMatrix

logger = logging.getLogger(__name__)

DEFAULT_TRAIN_FRACTION = 0.8
DEFAULT_MEAN_WINDOW = 10
SPLIT_MODES = ("random", "chronological")

# fitter(train) -> predict(design) on the scale of the design target
Fitter = Callable[[DesignMatrix], Callable[[DesignMatrix], np.ndarray]]
# forecaster(history, h) -> h forecasts on the scale of history
Forecaster = Callable[[np.ndarray, int], np.ndarray]


def demand_scale(values: Sequence[float], target_name: str = "hdi_sqrt") -> np.ndarray:
    """
    Maps model-scale values to the HDI scale.

    sqrt(HDI) values are squared with negative predictions floored at zero;
    a target already on the HDI scale is returned as is.
    """
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if target_name == "hdi":
        return values
    return np.atleast_1d(inverse_transform(np.maximum(values, 0.0)))


def mape(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """
    Mean absolute percentage error, in percent.

    Raises:
        EvaluationError: On unequal lengths or a zero actual value (the index is named).
    """
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise EvaluationError(f"Length mismatch: {actual.shape} actuals vs {predicted.shape} predictions.")
    if actual.size == 0:
        raise EvaluationError("MAPE of an empty series is undefined.")
    zeros = np.flatnonzero(actual == 0)
    if zeros.size:
        raise EvaluationError(f"MAPE undefined: actual value at index {int(zeros[0])} is zero.")
    return float(100.0 * np.mean(np.abs(actual - predicted) / np.abs(actual)))


def split_train_test(
    dm: DesignMatrix,
    fraction: float = DEFAULT_TRAIN_FRACTION,
    mode: str = "random",
    seed: int = 0,
) -> Tuple[DesignMatrix, DesignMatrix]:
    """
    Partitions design rows into train and test sets.

    Random mode draws round(fraction * n) training rows without replacement
    (rows keep their original order); chronological mode takes the first rows.
    """
    if not 0 < fraction < 1:
        raise EvaluationError(f"Invalid fraction: {fraction} must be in (0, 1).")
    if mode not in SPLIT_MODES:
        raise EvaluationError(f"Invalid split mode: {mode!r} (expected one of {SPLIT_MODES}).")
    n = dm.n_rows
    n_train = int(np.floor(fraction * n + 0.5))
    if n_train < 2:
        raise EvaluationError(f"Training set too small: {n_train} rows from {n}.")
    if mode == "chronological":
        train_idx = np.arange(n_train)
    else:
        rng = np.random.default_rng(seed)
        train_idx = np.sort(rng.choice(n, size=n_train, replace=False))
    test_idx = np.setdiff1d(np.arange(n), train_idx)
    return dm.take(train_idx), dm.take(test_idx)


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    r2: Optional[float] = None
    mape: Optional[float] = None
    error: Optional[str] = None


@dataclass
class CVResult:
    folds: List[FoldResult]
    mean_r2: Optional[float]
    mean_mape: Optional[float]

    @property
    def failed(self) -> List[int]:
        return [f.fold for f in self.folds if f.error is not None]

    def to_dict(self) -> dict:
        return {"folds": [asdict(f) for f in self.folds], "mean_r2": self.mean_r2,
                "mean_mape": self.mean_mape, "failed": self.failed}


def fold_indices(n: int, k: int, seed: int = 0) -> List[np.ndarray]:
    """Seeded shuffle of range(n) cut into k folds whose sizes differ by at most one."""
    if k < 2 or n < k:
        raise EvaluationError(f"Invalid fold count: k={k} for {n} rows.")
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(order, k)]


def _run_fold(dm: DesignMatrix, fitter: Fitter, fold: int, test_idx: np.ndarray) -> FoldResult:
    train_idx = np.setdiff1d(np.arange(dm.n_rows), test_idx)
    result = FoldResult(fold, len(train_idx), len(test_idx))
    try:
        predict = fitter(dm.take(train_idx))
        test = dm.take(test_idx)
        predicted = predict(test)
        result.r2 = r2_score(test.target, predicted)
        result.mape = mape(demand_scale(test.target, test.target_name), demand_scale(predicted, test.target_name))
    except HousingDemandError as e:
        logger.warning("Fold %d failed: %s", fold, e)
        result.error = str(e)
    return result


def kfold_cv(dm: DesignMatrix, k: int, fitter: Fitter, seed: int = 0, n_jobs: int = 1) -> CVResult:
    """
    k-fold cross-validation; each fold is held out once.

    A fitter that raises in some fold is recorded and the fold skipped.
    """
    folds = fold_indices(dm.n_rows, k, seed)
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_run_fold)(dm, fitter, i, idx) for i, idx in enumerate(folds)
    )
    ok = [r for r in results if r.error is None]
    if not ok:
        raise EvaluationError(f"All {k} folds failed.")
    return CVResult(
        results,
        float(np.mean([r.r2 for r in ok])),
        float(np.mean([r.mape for r in ok])),
    )


def baseline_forecasts(y: Sequence[float], h: int, window: int = DEFAULT_MEAN_WINDOW) -> Dict[str, np.ndarray]:
    """Constant (last value) and trailing-mean forecasts repeated over h steps."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise EvaluationError("Baselines need a non-empty series.")
    if h < 1:
        raise EvaluationError(f"Invalid horizon: {h} must be >= 1.")
    return {
        "constant": np.full(h, y[-1]),
        "mean": np.full(h, y[-window:].mean()),
    }


def constant_forecaster(history: np.ndarray, h: int) -> np.ndarray:
    return baseline_forecasts(history, h)["constant"]


def mean_forecaster(history: np.ndarray, h: int) -> np.ndarray:
    return baseline_forecasts(history, h)["mean"]


@dataclass
class RollingOriginResult:
    origins: List[int]
    forecasts: np.ndarray  # (origins, h)
    actuals: np.ndarray
    mape_by_step: np.ndarray
    failed: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return self.forecasts.shape[1]

    @property
    def mape(self) -> float:
        """Mean over steps 1..h."""
        return float(np.mean(self.mape_by_step))

    @property
    def mape_h(self) -> float:
        """Step h only."""
        return float(self.mape_by_step[-1])


def _run_origin(y: np.ndarray, forecaster: Forecaster, t: int, h: int):
    try:
        forecast = np.asarray(forecaster(y[:t].copy(), h), dtype=float)
        if forecast.shape != (h,):
            raise EvaluationError(f"Forecaster returned shape {forecast.shape}, expected ({h},).")
        return forecast, None
    except HousingDemandError as e:
        return None, str(e)


def rolling_origin(
    y: Sequence[float],
    forecaster: Forecaster,
    h: int,
    min_train: int,
    n_jobs: int = 1,
) -> RollingOriginResult:
    """
    Fits on y[:t] and forecasts y[t:t+h] for every origin t = min_train .. n-h.

    Forecaster failures are recorded and the origin skipped.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if h < 1 or min_train < 1:
        raise EvaluationError(f"Invalid rolling origin: h={h}, min_train={min_train}.")
    if n < min_train + h:
        raise EvaluationError(f"Series too short: {n} observations for min_train={min_train}, h={h}.")

    origins = list(range(min_train, n - h + 1))
    runs = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_run_origin)(y, forecaster, t, h) for t in origins
    )
    kept, forecasts, failed = [], [], []
    for t, (forecast, error) in zip(origins, runs):
        if error is not None:
            logger.warning("Origin %d skipped: %s", t, error)
            failed.append((t, error))
        else:
            kept.append(t)
            forecasts.append(forecast)
    if not kept:
        raise EvaluationError(f"All {len(origins)} origins failed.")

    forecasts = np.vstack(forecasts)
    actuals = np.vstack([y[t:t + h] for t in kept])
    by_step = np.array([mape(actuals[:, i], forecasts[:, i]) for i in range(h)])
    return RollingOriginResult(kept, forecasts, actuals, by_step, failed)


@dataclass
class EvalReport:
    model_name: str
    split: str
    horizon: int
    mape: float
    mape_h: Optional[float] = None
    r2: Optional[float] = None
    adj_r2: Optional[float] = None
    baseline_mapes: Dict[str, float] = field(default_factory=dict)
    baseline_mapes_h: Dict[str, float] = field(default_factory=dict)
    n_origins: Optional[int] = None
    folds: List[dict] = field(default_factory=list)
    failed: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "split": self.split,
            "horizon": self.horizon,
            "mape": self.mape,
            "mape_h": self.mape_h,
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "baselines": dict(self.baseline_mapes),
            "baselines_h": dict(self.baseline_mapes_h),
            "n_origins": self.n_origins,
            "folds": list(self.folds),
            "failed": list(self.failed),
        }


def evaluate_forecaster(
    y: Sequence[float],
    forecaster: Forecaster,
    model_name: str,
    h: int,
    min_train: int,
    n_jobs: int = 1,
) -> EvalReport:
    """Rolling-origin report for a forecaster alongside the constant and mean baselines at the same origins."""
    result = rolling_origin(y, forecaster, h, min_train, n_jobs)
    baselines, baselines_h = {}, {}
    for name, baseline in (("constant", constant_forecaster), ("mean", mean_forecaster)):
        base = rolling_origin(y, baseline, h, min_train)
        base_kept = [i for i, t in enumerate(base.origins) if t in set(result.origins)]
        by_step = np.array([
            mape(base.actuals[base_kept, i], base.forecasts[base_kept, i]) for i in range(h)
        ])
        baselines[name] = float(np.mean(by_step))
        baselines_h[name] = float(by_step[-1])
    logger.info("%s: rolling-origin MAPE %.3f%% (step %d: %.3f%%) over %d origins",
                model_name, result.mape, h, result.mape_h, len(result.origins))
    return EvalReport(
        model_name=model_name,
        split="rolling-origin",
        horizon=h,
        mape=result.mape,
        mape_h=result.mape_h,
        baseline_mapes=baselines,
        baseline_mapes_h=baselines_h,
        n_origins=len(result.origins),
        failed=[f"origin {t}: {error}" for t, error in result.failed],
    )


def evaluate_regression(
    model_name: str,
    train: DesignMatrix,
    test: DesignMatrix,
    predict: Callable[[DesignMatrix], np.ndarray],
    split: str = "random",
) -> Tuple[EvalReport, EvalReport]:
    """Train and test reports (R^2, adjusted R^2, MAPE on the HDI scale) for a fitted regression."""
    reports = []
    for label, dm in (("train", train), ("test", test)):
        predicted = predict(dm)
        r2 = r2_score(dm.target, predicted)
        try:
            adj = adjusted_r2(r2, dm.n_rows, dm.n_cols)
        except EvaluationError:
            adj = None
        reports.append(EvalReport(
            model_name=model_name,
            split=f"{split}:{label}",
            horizon=0,
            mape=mape(demand_scale(dm.target, dm.target_name), demand_scale(predicted, dm.target_name)),
            r2=r2,
            adj_r2=adj,
        ))
    return reports[0], reports[1]
