import logging

from housing_demand.arima import ArimaSpec, fit_regarima, forecast
from housing_demand.config import DEFAULT_ARIMAX_SPEC, DEFAULT_MIN_TRAIN, DEFAULT_UNIVARIATE_SPEC
from housing_demand.evaluation import evaluate_forecaster
from housing_demand.indices import compute_indices
from housing_demand.lasso import lar_path, path_importance
from housing_demand.report import arimax_fit_forecast, arimax_forecaster, univariate_forecaster
from housing_demand.synth import SynthParams, generate_weekly
from housing_demand.tsa import build_design_matrix, cross_correlation, lasso_lag_spec, peak_week, seasonal_decompose

if __name__ == "__main__":
    logging.basicConfig(level=logging.WARNING, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    horizon = 20

    # 1. Generate three years of a synthetic market
    weekly, truth = generate_weekly(SynthParams(seed=7))
    idx = compute_indices(weekly)

    # 2. Exploration: seasonal peak of showings and the showings -> sales lag
    dec = seasonal_decompose(weekly.showings, 52)
    ccf = [(k, r) for k, r in cross_correlation(weekly.showings, weekly.sold, 20) if k >= 1]
    best_lag, best_r = max(ccf, key=lambda kr: kr[1])

    # 3. Most important predictors along the lasso path
    dm = build_design_matrix(idx, weekly, lasso_lag_spec())
    importance = path_importance(lar_path(dm, "lasso"), top=5)

    # 4. Hold out the last 20 weeks and forecast them
    cut = len(idx) - horizon
    univariate = fit_regarima(idx.hdi_sqrt[:cut], spec=ArimaSpec.parse(DEFAULT_UNIVARIATE_SPEC), target="hdi_sqrt")
    fc_uni = forecast(univariate, horizon)
    fc_arimax = arimax_fit_forecast(idx.slice(0, cut), ArimaSpec.parse(DEFAULT_ARIMAX_SPEC), horizon)

    # 5. Rolling-origin comparison against the naive baselines
    uni_report = evaluate_forecaster(idx.hdi, univariate_forecaster(ArimaSpec.parse(DEFAULT_UNIVARIATE_SPEC)),
                                     "univariate", horizon, DEFAULT_MIN_TRAIN)
    arimax_report = evaluate_forecaster(idx.hdi, arimax_forecaster(idx, ArimaSpec.parse(DEFAULT_ARIMAX_SPEC)),
                                        "ARIMAX", horizon, DEFAULT_MIN_TRAIN)

    # 6. Print the results
    print("--- Synthetic market ---")
    print(f"Weeks: {len(weekly)}, mean HDI: {idx.hdi.mean():.5f}, mean SI: {idx.si.mean():.3f}")
    print(f"Showings peak at week {peak_week(dec)}; sales follow showings by {best_lag} weeks (r={best_r:.2f})")
    print(f"Top lasso predictors: {', '.join(importance)}")
    print("\n--- Hold-out forecast of the last 20 weeks (HDI) ---")
    for step in (1, 5, 10, 20):
        print(f"step {step:2d}: actual {idx.hdi[cut + step - 1]:.5f}  "
              f"univariate {fc_uni.point[step - 1]:.5f}  ARIMAX {fc_arimax.point[step - 1]:.5f}")
    print("\n--- Rolling-origin MAPE (%) ---")
    print(f"constant baseline: {uni_report.baseline_mapes['constant']:.2f}")
    print(f"mean baseline:     {uni_report.baseline_mapes['mean']:.2f}")
    print(f"univariate ARIMA:  {uni_report.mape:.2f}")
    print(f"ARIMAX lagged SI:  {arimax_report.mape:.2f}")
