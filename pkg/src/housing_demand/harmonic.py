"""
Harmonic regression for the long (52.18-week) annual cycle.

Fourier terms replace seasonal differencing, so the errors are a stationary
ARMA process and forecast intervals level off after a few steps.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .arima import ArimaSpec, Forecast, RegArimaFit, forecast, fit_regarima, lagged_xreg_future, load_fit
from .errors import ForecastError, HousingDemandError, ModelFitError
from .indices import IndexSeries
from .tsa import FOURIER_PERIOD, DesignMatrix, LagSpec, build_design_matrix, fourier_terms

logger = logging.getLogger(__name__)

TREND = "trend"
DEFAULT_K_MAX = 5
DEFAULT_ORDERS = tuple((p, q) for p in range(3) for q in range(3))


@dataclass
class HarmonicFit:
    fit: RegArimaFit
    K: int
    period: float
    n: int  # series position of the last observation
    exog_names: List[str]

    @property
    def aicc(self) -> float:
        return self.fit.aicc

    def to_artifact(self) -> dict:
        return {
            "model": "harmonic",
            "K": self.K,
            "period": self.period,
            "n": self.n,
            "exog_names": list(self.exog_names),
            "regarima": self.fit.to_artifact(),
        }


def load_harmonic_fit(payload: dict) -> HarmonicFit:
    if payload.get("model") != "harmonic":
        raise ModelFitError(f"Not a harmonic regression artifact: model={payload.get('model')!r}.")
    return HarmonicFit(
        load_fit(payload["regarima"]), int(payload["K"]), float(payload["period"]),
        int(payload["n"]), list(payload["exog_names"]),
    )


def harmonic_design(n: int, K: int, xreg: Optional[DesignMatrix] = None,
                    period: float = FOURIER_PERIOD, start: int = 1) -> DesignMatrix:
    """Trend t, the exogenous columns and K Fourier pairs for t = start .. start+n-1."""
    trend = DesignMatrix((TREND,), np.arange(start, start + n, dtype=float).reshape(-1, 1))
    design = trend if xreg is None else trend.hstack(xreg.with_target(None))
    return design.hstack(fourier_terms(n, K, period, start))


def _try(y, design, spec, target, K) -> Tuple[int, ArimaSpec, Optional[RegArimaFit], Optional[str]]:
    try:
        return K, spec, fit_regarima(y, design, spec, target), None
    except HousingDemandError as e:
        return K, spec, None, str(e)


def fit_harmonic(
    y: Sequence[float],
    xreg: Optional[DesignMatrix] = None,
    K_max: int = DEFAULT_K_MAX,
    orders: Sequence[Tuple[int, int]] = DEFAULT_ORDERS,
    period: float = FOURIER_PERIOD,
    target: str = "identity",
    n_jobs: int = 1,
    start: int = 1,
) -> HarmonicFit:
    """
    Regression on trend, exogenous columns and Fourier terms with ARMA(p, q) errors.

    ``start`` is the series position (1-based) of y[0], so the Fourier terms
    keep their calendar phase when leading rows were dropped for lags.
    Every (K, order) pair for K = 1..K_max is fitted and the minimum-AICc fit
    kept; ties go to fewer parameters, then smaller K.

    Raises:
        ModelFitError: If every candidate fails.
    """
    y = np.asarray(y, dtype=float)
    if K_max < 1:
        raise ModelFitError(f"Invalid K_max: {K_max} must be >= 1.")
    Ks = [K for K in range(1, K_max + 1) if 2 * K < period]
    candidates = [
        (K, harmonic_design(len(y), K, xreg, period, start), ArimaSpec(p=p, q=q, s=1))
        for K in Ks for p, q in orders
    ]
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_try)(y, design, spec, target, K) for K, design, spec in candidates
    )
    best, best_key = None, None
    for i, (K, spec, fit, error) in enumerate(results):
        if fit is None:
            logger.warning("Skipped K=%d %s: %s", K, spec, error)
            continue
        key = (fit.aicc, fit.n_params, i)
        if best_key is None or key < best_key:
            best, best_key = (K, fit), key
    if best is None:
        raise ModelFitError(f"All {len(candidates)} harmonic regression fits failed.")
    K, fit = best
    logger.info("Harmonic regression: K=%d with ARMA(%d,%d) errors, AICc %.4f", K, fit.spec.p, fit.spec.q, fit.aicc)
    return HarmonicFit(fit, K, period, start - 1 + len(y), [] if xreg is None else list(xreg.column_names))


def harmonic_xreg_future(hfit: HarmonicFit, h: int, xreg_future: Optional[DesignMatrix] = None) -> DesignMatrix:
    """Extends trend and Fourier columns h steps past the sample."""
    if hfit.exog_names:
        if xreg_future is None or xreg_future.n_rows != h:
            raise ForecastError(f"Missing future regressors: the fit needs {hfit.exog_names} for {h} steps.")
        xreg_future = xreg_future.select(hfit.exog_names)
    else:
        xreg_future = None
    return harmonic_design(h, hfit.K, xreg_future, hfit.period, start=hfit.n + 1)


def forecast_harmonic(hfit: HarmonicFit, h: int, xreg_future: Optional[DesignMatrix] = None,
                      level: float = 95.0, xreg_fill: Optional[List[str]] = None) -> Forecast:
    return forecast(hfit.fit, h, harmonic_xreg_future(hfit, h, xreg_future), level, xreg_fill)


def lagged_harmonic_inputs(
    idx: IndexSeries, lag_spec: Optional[LagSpec], target: str = "hdi_sqrt",
) -> Tuple[np.ndarray, Optional[DesignMatrix], int, str]:
    """
    (y, xreg, start, fit target) of a harmonic regression on idx.

    Without a lag spec the model is univariate on the ``target`` scale of HDI;
    otherwise the lagged design supplies both the target and the regressors,
    and y starts after the longest lag.
    """
    if lag_spec is None:
        return (idx.hdi_sqrt if target == "hdi_sqrt" else idx.hdi), None, 1, target
    dm = build_design_matrix(idx, None, lag_spec)
    fit_target = "hdi_sqrt" if lag_spec.target_name == "hdi_sqrt" else "identity"
    return dm.target, dm.with_target(None), int(dm.positions[0]) + 1, fit_target


def forecast_lagged_harmonic(hfit: HarmonicFit, idx: IndexSeries, lag_spec: Optional[LagSpec], h: int,
                             fill: str = "model", level: float = 95.0) -> Forecast:
    """Forecasts past the end of idx; unknown lag cells are filled per ``fill``."""
    if not hfit.exog_names:
        return forecast_harmonic(hfit, h, level=level)
    if lag_spec is None:
        raise ForecastError(f"Missing lag spec for the regressors {hfit.exog_names}.")
    if len(idx) != hfit.n:
        raise ForecastError(f"Index series has {len(idx)} weeks; the model was fitted through week {hfit.n}.")
    future = lagged_xreg_future(idx, lag_spec, h, fill)
    return forecast_harmonic(hfit, h, future.design, level, future.step_labels())
