"""
Model comparison bundle: rolling-origin MAPE of the baselines, the univariate
seasonal ARIMA, the ARIMAX on lagged SI and the Fourier-term regression, plus
the hold-out scores of the ensemble, and plot-ready CSVs for each piece.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .arima import ArimaSpec, Forecast, fit_regarima, forecast, lagged_xreg_future
from .cart import root_split
from .config import DEFAULT_ARIMAX_SPEC, DEFAULT_UNIVARIATE_SPEC, RunConfig
from .ensemble import fit_ensemble, predict_ensemble
from .evaluation import (
    EvalReport, Forecaster, baseline_forecasts, evaluate_forecaster, evaluate_regression, split_train_test,
)
from .harmonic import HarmonicFit, fit_harmonic, forecast_lagged_harmonic, harmonic_design, lagged_harmonic_inputs
from .indices import IndexSeries, compute_indices
from .ingest import WeeklySeries
from .io_utils import write_json
from .tsa import (
    DEFAULT_PERIOD, FOURIER_PERIOD, LagSpec, arimax_lag_spec, build_design_matrix, ccf_frame,
    cross_correlation, peak_week, seasonal_decompose, write_frame_csv,
)

logger = logging.getLogger(__name__)

COMPARISON_COLUMNS = ["model", "split", "mape", "mape_h", "r2", "adj_r2", "n_origins"]


def _fit_target(lag_spec: LagSpec) -> str:
    return "hdi_sqrt" if lag_spec.target_name == "hdi_sqrt" else "identity"


def _model_scale(hdi: np.ndarray, target: str) -> np.ndarray:
    return np.sqrt(hdi) if target == "hdi_sqrt" else hdi


def univariate_forecaster(spec: ArimaSpec, target: str = "hdi_sqrt") -> Forecaster:
    """Refits a fixed seasonal ARIMA on each history of HDI values."""
    def run(history: np.ndarray, h: int) -> np.ndarray:
        y = _model_scale(history, target)
        return forecast(fit_regarima(y, None, spec, target), h).point
    return run


def arimax_fit_forecast(
    idx: IndexSeries,
    spec: ArimaSpec,
    h: int,
    lag_spec: Optional[LagSpec] = None,
    fill: str = "model",
    level: float = 95.0,
) -> Forecast:
    """Fits regression on lagged SI with ARIMA errors to idx and forecasts h steps past its end."""
    lag_spec = lag_spec or arimax_lag_spec()
    dm = build_design_matrix(idx, None, lag_spec)
    fit = fit_regarima(dm.target, dm.with_target(None), spec, _fit_target(lag_spec))
    future = lagged_xreg_future(idx, lag_spec, h, fill)
    return forecast(fit, h, future.design, level, future.step_labels())


def arimax_forecaster(
    idx: IndexSeries,
    spec: ArimaSpec,
    lag_spec: Optional[LagSpec] = None,
    fill: str = "model",
) -> Forecaster:
    """Each history is the first len(history) weeks of idx; SI lags come from the same weeks."""
    def run(history: np.ndarray, h: int) -> np.ndarray:
        return arimax_fit_forecast(idx.slice(0, len(history)), spec, h, lag_spec, fill).point
    return run


def harmonic_fit_forecast(
    idx: IndexSeries,
    K: int,
    order: ArimaSpec,
    h: int,
    lag_spec: Optional[LagSpec] = None,
    fill: str = "model",
    period: float = FOURIER_PERIOD,
    target: str = "hdi_sqrt",
    level: float = 95.0,
) -> Forecast:
    """Fits trend, lagged regressors and K Fourier pairs with fixed ARMA errors to idx and forecasts h steps."""
    y, xreg, start, fit_target = lagged_harmonic_inputs(idx, lag_spec, target)
    fit = fit_regarima(y, harmonic_design(len(y), K, xreg, period, start), order, fit_target)
    hfit = HarmonicFit(fit, K, period, start - 1 + len(y), [] if xreg is None else list(xreg.column_names))
    return forecast_lagged_harmonic(hfit, idx, lag_spec, h, fill, level)


def harmonic_forecaster(
    idx: IndexSeries,
    K: int,
    order: ArimaSpec,
    lag_spec: Optional[LagSpec] = None,
    fill: str = "model",
    period: float = FOURIER_PERIOD,
    target: str = "hdi_sqrt",
) -> Forecaster:
    """Refits the harmonic regression on the first len(history) weeks of idx."""
    def run(history: np.ndarray, h: int) -> np.ndarray:
        return harmonic_fit_forecast(idx.slice(0, len(history)), K, order, h, lag_spec, fill, period, target).point
    return run


def _holdout_frame(fc: Forecast, history: np.ndarray, actual: np.ndarray) -> pd.DataFrame:
    frame = fc.to_frame()
    frame["actual"] = actual
    for name, values in baseline_forecasts(history, fc.horizon).items():
        frame[name] = values
    return frame


def _row(report: EvalReport) -> dict:
    return {
        "model": report.model_name, "split": report.split, "mape": report.mape,
        "mape_h": report.mape_h, "r2": report.r2, "adj_r2": report.adj_r2,
        "n_origins": report.n_origins,
    }


def build_report(weekly: WeeklySeries, config: RunConfig, out_dir: Path) -> Dict[str, Path]:
    """
    Writes the comparison bundle into out_dir.

    Returns:
        Mapping of bundle entry name to the written path.
    """
    out_dir = Path(out_dir)
    idx = compute_indices(weekly)
    h = config.horizon
    n_jobs = config.threads
    target = config.target
    written: Dict[str, Path] = {}
    details: dict = {}

    start = int(weekly.weeks[0]) - 1
    for name, values in (("showings", weekly.showings), ("sold", weekly.sold)):
        dec = seasonal_decompose(values, DEFAULT_PERIOD, config.iterations, start)
        details[f"peak_week_{name}"] = peak_week(dec, config.peak_window)
        written[f"decomposition_{name}"] = out_dir / f"decomposition_{name}.csv"
        write_frame_csv(dec.to_frame(), written[f"decomposition_{name}"])

    ccf = cross_correlation(weekly.showings, weekly.sold, config.max_lag)
    positive = [(k, r) for k, r in ccf if k >= 1]
    details["xcorr_peak_lag"] = max(positive, key=lambda kr: kr[1])[0] if positive else None
    written["xcorr"] = out_dir / "xcorr.csv"
    write_frame_csv(ccf_frame(ccf, len(weekly)), written["xcorr"])

    uni_spec = config.arima_spec() or ArimaSpec.parse(DEFAULT_UNIVARIATE_SPEC)
    x_spec = ArimaSpec.parse(DEFAULT_ARIMAX_SPEC)
    lag_spec = arimax_lag_spec()

    univariate = evaluate_forecaster(idx.hdi, univariate_forecaster(uni_spec, target),
                                     f"univariate {uni_spec}", h, config.min_train, n_jobs)
    arimax = evaluate_forecaster(idx.hdi, arimax_forecaster(idx, x_spec, lag_spec, config.fill),
                                 f"ARIMAX {x_spec} on lagged SI", h, config.min_train, n_jobs)

    fourier_lags = lag_spec if config.exog else None
    y0, xreg0, start0, fit_target0 = lagged_harmonic_inputs(idx.slice(0, config.min_train), fourier_lags, target)
    selected = fit_harmonic(y0, xreg0, config.k_max, target=fit_target0, n_jobs=n_jobs, start=start0)
    order = selected.fit.spec
    details["fourier"] = {"K": selected.K, "p": order.p, "q": order.q, "exog": selected.exog_names}
    fourier_name = f"Fourier K={selected.K} ARMA({order.p},{order.q})" + (" on lagged SI" if fourier_lags else "")
    fourier = evaluate_forecaster(
        idx.hdi, harmonic_forecaster(idx, selected.K, order, fourier_lags, config.fill, selected.period, target),
        fourier_name, h, config.min_train, n_jobs,
    )

    dm = build_design_matrix(idx, weekly, config.resolved_lag_spec())
    train, test = split_train_test(dm, config.train_fraction, config.split, config.seed)
    model = fit_ensemble(
        train, test, config.protocol, config.weights, max_depth=config.max_depth, min_leaf=config.min_leaf,
        hidden=config.hidden, epochs=config.epochs, learn_rate=config.learn_rate,
        grid_step=config.grid_step, seed=config.seed,
    )
    _, ensemble = evaluate_regression("ensemble", train, test, lambda d: predict_ensemble(model, d), config.split)
    details["ensemble"] = {"weights": list(model.weights), "cart_root_split": root_split(model.cart)}

    rows: List[dict] = []
    for name in ("constant", "mean"):
        rows.append({"model": name, "split": univariate.split, "mape": univariate.baseline_mapes[name],
                     "mape_h": univariate.baseline_mapes_h[name], "r2": None, "adj_r2": None,
                     "n_origins": univariate.n_origins})
    rows += [_row(r) for r in (univariate, arimax, fourier, ensemble)]
    comparison = pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
    written["comparison_csv"] = out_dir / "comparison.csv"
    write_frame_csv(comparison, written["comparison_csv"])
    written["comparison_json"] = out_dir / "comparison.json"
    write_json(written["comparison_json"], {"rows": rows, "details": details,
                                            "failed": {r.model_name: r.failed for r in (univariate, arimax, fourier)}})

    cut = len(idx) - h
    history, actual = idx.hdi[:cut], idx.hdi[cut:]
    holdouts = {
        "forecast_univariate": forecast(fit_regarima(_model_scale(history, target), None, uni_spec, target), h, level=config.level),
        "forecast_arimax": arimax_fit_forecast(idx.slice(0, cut), x_spec, h, lag_spec, config.fill, config.level),
        "forecast_fourier": harmonic_fit_forecast(idx.slice(0, cut), selected.K, order, h, fourier_lags,
                                                  config.fill, selected.period, target, config.level),
    }
    for name, fc in holdouts.items():
        written[name] = out_dir / f"{name}.csv"
        write_frame_csv(_holdout_frame(fc, history, actual), written[name])

    logger.info("Report written to %s (%d files)", out_dir, len(written))
    return written
