"""
Batch command-line front end: one pipeline step per subcommand.

    housing-demand synth --seed 7 --out corpus/
    housing-demand aggregate --events corpus/events.csv --out weekly.csv
    housing-demand fit-arima --weekly weekly.csv --spec 0,1,3:0,1,0:52 --out arima.json
    housing-demand evaluate --model arima.json --weekly weekly.csv --horizon 20

Exit status: 0 on success, 1 on a usage or configuration error, 2 on a data
or model error.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, TypeVar

import numpy as np
from pydantic import ValidationError

from .arima import (
    arimax_grid, auto_select, default_grid, fit_regarima, forecast, lagged_xreg_future,
    load_fit, parse_grid, write_forecast_csv,
)
from .config import LAG_PRESETS, RunConfig, load_config, write_config_echo
from .ensemble import fit_ensemble, load_ensemble, predict_ensemble
from .errors import ForecastError, HousingDemandError, ModelFitError
from .evaluation import evaluate_forecaster, evaluate_regression, kfold_cv, split_train_test
from .harmonic import fit_harmonic, forecast_harmonic, forecast_lagged_harmonic, lagged_harmonic_inputs, load_harmonic_fit
from .indices import IndexSeries, compute_indices, write_index_csv
from .ingest import aggregate_weekly, filter_events, read_events_csv, read_weekly_csv, write_weekly_csv
from .io_utils import read_json, write_json
from .lasso import (
    coefficients_at, lar_path, load_lasso_coefficients, path_importance, select_lambda_by_cv, write_path_csv,
)
from .linear import forward_stepwise, load_linear_fit, ols_fit, predict
from .report import arimax_forecaster, build_report, harmonic_forecaster, univariate_forecaster
from .synth import generate_events, write_corpus
from .tsa import (
    DEFAULT_PERIOD, DesignMatrix, LagSpec, arimax_lag_spec, build_design_matrix, ccf_frame, cross_correlation,
    peak_week, seasonal_decompose, write_frame_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
SERIES_NAMES = ("showings", "sold", "on_market", "hdi", "si")
LINEAR_MODELS = ("ols", "stepwise")

T = TypeVar("T")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- Shared helpers ---

def _series(name: str, weekly, idx: IndexSeries) -> np.ndarray:
    if name in ("hdi", "si"):
        return getattr(idx, name)
    if name in ("showings", "sold", "on_market"):
        return np.asarray(getattr(weekly, name), dtype=float)
    raise ForecastError(f"Unknown series {name!r} (expected one of {SERIES_NAMES}).")


def _load_inputs(path: Path):
    weekly = read_weekly_csv(path)
    return weekly, compute_indices(weekly)


def _read_model(path: Path) -> dict:
    try:
        payload = read_json(path)
    except ValueError as e:
        raise ModelFitError(f"Model file {path} is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise ModelFitError(f"Model file {path} does not hold a JSON object.")
    return payload


def _load(loader: Callable[[dict], T], payload: dict) -> T:
    """Runs an artifact loader; missing or ill-typed fields become ModelFitError."""
    try:
        return loader(payload)
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFitError(f"Malformed {payload.get('model')!r} artifact: {e!r}") from e


def _model_lag_spec(payload: dict) -> LagSpec:
    if "lag_spec" not in payload:
        raise ModelFitError(f"Artifact for model {payload.get('model')!r} carries no lag_spec.")
    return _load(lambda p: LagSpec.model_validate(p["lag_spec"]), payload)


def _regression_predictor(payload: dict) -> Callable[[DesignMatrix], np.ndarray]:
    model = payload.get("model")
    if model in LINEAR_MODELS:
        fit = _load(load_linear_fit, payload)
        return lambda dm: predict(fit, dm)
    if model == "lasso":
        return _load(load_lasso_coefficients, payload).predict
    if model == "ensemble":
        ensemble = _load(load_ensemble, payload)
        return lambda dm: predict_ensemble(ensemble, dm)
    raise ModelFitError(f"Not a regression artifact: model={model!r}.")


def _regression_evaluation(config: RunConfig, train: DesignMatrix, test: DesignMatrix,
                           name: str, predictor: Callable[[DesignMatrix], np.ndarray]) -> dict:
    train_report, test_report = evaluate_regression(name, train, test, predictor, config.split)
    return {"train": train_report.to_dict(), "test": test_report.to_dict()}


def _arima_model_scale(idx: IndexSeries, target: str) -> np.ndarray:
    return idx.hdi_sqrt if target == "hdi_sqrt" else idx.hdi


# --- Subcommands ---

def cmd_synth(args, config: RunConfig) -> Path:
    corpus = generate_events(config.synth)
    write_corpus(corpus, args.out)
    return args.out


def cmd_aggregate(args, config: RunConfig) -> Path:
    events = filter_events(read_events_csv(args.events, n_jobs=config.threads))
    write_weekly_csv(aggregate_weekly(events), args.out)
    return args.out


def cmd_indices(args, config: RunConfig) -> Path:
    _, idx = _load_inputs(args.weekly)
    write_index_csv(idx, args.out)
    return args.out


def cmd_decompose(args, config: RunConfig) -> Path:
    weekly, idx = _load_inputs(args.weekly)
    values = _series(config.series, weekly, idx)
    dec = seasonal_decompose(values, DEFAULT_PERIOD, config.iterations, int(idx.weeks[0]) - 1)
    logger.info("%s seasonal peak at week %d", config.series, peak_week(dec, config.peak_window))
    write_frame_csv(dec.to_frame(), args.out)
    return args.out


def cmd_xcorr(args, config: RunConfig) -> Path:
    weekly, idx = _load_inputs(args.weekly)
    a, b = (_series(name, weekly, idx) for name in config.pair)
    ccf = cross_correlation(a, b, config.max_lag)
    best = max((kr for kr in ccf if kr[0] >= 1), key=lambda kr: kr[1], default=None)
    if best is not None:
        logger.info("Strongest positive-lag correlation of %s leading %s: lag %d (r=%.3f)", *config.pair, *best)
    write_frame_csv(ccf_frame(ccf, len(a)), args.out)
    return args.out


def cmd_design(args, config: RunConfig) -> Path:
    weekly, idx = _load_inputs(args.weekly)
    dm = build_design_matrix(idx, weekly, config.resolved_lag_spec())
    write_frame_csv(dm.to_frame(), args.out)
    return args.out


def cmd_fit_linear(args, config: RunConfig) -> Path:
    weekly, idx = _load_inputs(args.weekly)
    lag_spec = config.resolved_lag_spec()
    dm = build_design_matrix(idx, weekly, lag_spec)
    train, test = split_train_test(dm, config.train_fraction, config.split, config.seed)

    def fit_on(part: DesignMatrix, n_jobs: int = 1):
        if config.criterion == "none":
            return ols_fit(part)
        return forward_stepwise(part, config.criterion, config.alpha, n_jobs)

    def fitter(part: DesignMatrix):
        fold_fit = fit_on(part)
        return lambda d: predict(fold_fit, d)

    fit = fit_on(train, config.threads)
    artifact = fit.to_artifact()
    artifact["lag_spec"] = lag_spec.model_dump()
    artifact["evaluation"] = _regression_evaluation(config, train, test, fit.model, lambda d: predict(fit, d))
    artifact["evaluation"]["cv"] = kfold_cv(dm, config.folds, fitter, config.seed, config.threads).to_dict()
    write_json(args.out, artifact)
    return args.out


def cmd_fit_lasso(args, config: RunConfig) -> Path:
    weekly, idx = _load_inputs(args.weekly)
    lag_spec = config.resolved_lag_spec()
    dm = build_design_matrix(idx, weekly, lag_spec)
    train, test = split_train_test(dm, config.train_fraction, config.split, config.seed)
    path = lar_path(train, config.lasso_mode)
    lam = config.lam
    if lam is None:
        lam, _ = select_lambda_by_cv(train, config.lasso_mode, n_jobs=config.threads)
    coefs = coefficients_at(path, lam)
    artifact = coefs.to_artifact()
    artifact["mode"] = config.lasso_mode
    artifact["lag_spec"] = lag_spec.model_dump()
    artifact["importance"] = path_importance(path, 10)
    artifact["evaluation"] = _regression_evaluation(config, train, test, "lasso", coefs.predict)
    write_json(args.out, artifact)
    write_path_csv(path, Path(args.out).with_suffix(".path.csv"))
    return args.out


def _harmonic_lag_spec(config: RunConfig) -> Optional[LagSpec]:
    if not config.exog:
        return None
    return config.lag_spec if config.lag_spec is not None else arimax_lag_spec()


def _fit_arima_artifact(config: RunConfig, idx: IndexSeries) -> dict:
    spec = config.arima_spec()
    grid = parse_grid(config.grid) if config.grid is not None else None
    target = config.target
    if config.kind == "harmonic":
        orders = [(spec.p, spec.q)] if spec is not None else None
        kwargs = {} if orders is None else {"orders": orders}
        lag_spec = _harmonic_lag_spec(config)
        y, xreg, start, fit_target = lagged_harmonic_inputs(idx, lag_spec, target)
        hfit = fit_harmonic(y, xreg, config.k_max, target=fit_target, n_jobs=config.threads, start=start, **kwargs)
        artifact = hfit.to_artifact()
        artifact["kind"] = "harmonic"
        artifact["fill"] = config.fill
        if lag_spec is not None:
            artifact["lag_spec"] = lag_spec.model_dump()
        return artifact

    if config.kind == "arimax":
        lag_spec = config.lag_spec if config.lag_spec is not None else arimax_lag_spec()
        dm = build_design_matrix(idx, None, lag_spec)
        y, xreg = dm.target, dm.with_target(None)
        target = "hdi_sqrt" if lag_spec.target_name == "hdi_sqrt" else "identity"
        grid = grid or arimax_grid()
    else:
        lag_spec = None
        y, xreg = _arima_model_scale(idx, target), None
        grid = grid or default_grid()

    if spec is not None:
        fit = fit_regarima(y, xreg, spec, target, config.seed)
    else:
        fit = auto_select(y, xreg, grid, target, config.seed, config.threads)
    artifact = fit.to_artifact()
    artifact["kind"] = config.kind
    artifact["spec_text"] = fit.spec.text()
    artifact["fill"] = config.fill
    if lag_spec is not None:
        artifact["lag_spec"] = lag_spec.model_dump()
    return artifact


def cmd_fit_arima(args, config: RunConfig) -> Path:
    _, idx = _load_inputs(args.weekly)
    write_json(args.out, _fit_arima_artifact(config, idx))
    return args.out


def cmd_fit_ensemble(args, config: RunConfig) -> Path:
    weekly, idx = _load_inputs(args.weekly)
    lag_spec = config.resolved_lag_spec()
    dm = build_design_matrix(idx, weekly, lag_spec)
    train, test = split_train_test(dm, config.train_fraction, config.split, config.seed)
    model = fit_ensemble(
        train, test, config.protocol, config.weights, max_depth=config.max_depth, min_leaf=config.min_leaf,
        hidden=config.hidden, epochs=config.epochs, learn_rate=config.learn_rate,
        grid_step=config.grid_step, seed=config.seed,
    )
    artifact = model.to_artifact()
    artifact["protocol"] = config.protocol
    artifact["lag_spec"] = lag_spec.model_dump()
    artifact["evaluation"] = _regression_evaluation(config, train, test, "ensemble",
                                                    lambda d: predict_ensemble(model, d))
    write_json(args.out, artifact)
    return args.out


def cmd_forecast(args, config: RunConfig) -> Path:
    payload = _read_model(args.model)
    model = payload.get("model")
    h, level = config.horizon, config.level
    if model == "harmonic":
        hfit = _load(load_harmonic_fit, payload)
        if hfit.exog_names:
            if args.weekly is None:
                raise ForecastError("Harmonic regressions on lagged SI need --weekly for the SI history.")
            _, idx = _load_inputs(args.weekly)
            fc = forecast_lagged_harmonic(hfit, idx, _model_lag_spec(payload), h, config.fill, level)
        else:
            fc = forecast_harmonic(hfit, h, level=level)
    elif model == "regarima":
        fit = _load(load_fit, payload)
        if payload.get("kind") == "arimax":
            if args.weekly is None:
                raise ForecastError("ARIMAX forecasts need --weekly for the lagged SI history.")
            lag_spec = _model_lag_spec(payload)
            _, idx = _load_inputs(args.weekly)
            if len(idx) != len(fit.y) + lag_spec.max_lag:
                raise ForecastError(
                    f"Weekly series has {len(idx)} weeks; the model was fitted on {len(fit.y) + lag_spec.max_lag}."
                )
            future = lagged_xreg_future(idx, lag_spec, h, config.fill)
            fc = forecast(fit, h, future.design, level, future.step_labels())
        else:
            fc = forecast(fit, h, level=level)
    else:
        raise ForecastError(f"Cannot forecast from a {model!r} artifact; use evaluate for regression models.")
    write_forecast_csv(fc, args.out)
    return args.out


def cmd_evaluate(args, config: RunConfig) -> Path:
    payload = _read_model(args.model)
    model = payload.get("model")
    weekly, idx = _load_inputs(args.weekly)
    h, min_train = config.horizon, config.min_train

    if model == "harmonic":
        hfit = _load(load_harmonic_fit, payload)
        lag_spec = _model_lag_spec(payload) if hfit.exog_names else None
        forecaster = harmonic_forecaster(idx, hfit.K, hfit.fit.spec, lag_spec, payload.get("fill", config.fill),
                                         hfit.period, hfit.fit.target)
        name = f"Fourier K={hfit.K} ARMA({hfit.fit.spec.p},{hfit.fit.spec.q})" + (" on lagged SI" if lag_spec else "")
    elif model == "regarima":
        fit = _load(load_fit, payload)
        if payload.get("kind") == "arimax":
            forecaster = arimax_forecaster(idx, fit.spec, _model_lag_spec(payload), payload.get("fill", config.fill))
            name = f"ARIMAX {fit.spec}"
        else:
            forecaster = univariate_forecaster(fit.spec, fit.target)
            name = f"univariate {fit.spec}"
    else:
        predictor = _regression_predictor(payload)
        dm = build_design_matrix(idx, weekly, _model_lag_spec(payload))
        train, test = split_train_test(dm, config.train_fraction, config.split, config.seed)
        report = _regression_evaluation(config, train, test, model, predictor)
        write_json(args.out, {**report["test"], "train": report["train"]})
        return args.out

    report = evaluate_forecaster(idx.hdi, forecaster, name, h, min_train, config.threads)
    write_json(args.out, report.to_dict())
    return args.out


def cmd_report(args, config: RunConfig) -> Path:
    weekly = read_weekly_csv(args.weekly)
    build_report(weekly, config, args.out)
    return args.out


# --- Parser ---

def _common_flags() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file of run settings; explicit flags override it")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="Worker threads (default 1)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="Random seed (default 0)")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Log debug detail")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Log warnings and errors only")
    return common


def _add(sub, name: str, handler, common, help_text: str, out_default: Optional[str]) -> argparse.ArgumentParser:
    parser = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    if out_default is None:
        parser.add_argument("--out", type=Path, required=True, help="Output path")
    else:
        parser.add_argument("--out", type=Path, default=Path(out_default), help=f"Output path (default {out_default})")
    parser.set_defaults(handler=handler)
    return parser


def _weekly_flag(parser, required: bool = True) -> None:
    parser.add_argument("--weekly", type=Path, required=required, help="Weekly CSV")


def _lag_flags(parser) -> None:
    parser.add_argument("--lag-preset", dest="lag_preset", choices=sorted(LAG_PRESETS), default=argparse.SUPPRESS,
                        help="Named predictor set (default lasso)")


def _split_flags(parser) -> None:
    parser.add_argument("--train-fraction", dest="train_fraction", type=float, default=argparse.SUPPRESS)
    parser.add_argument("--split", choices=["random", "chronological"], default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="housing-demand", description="Housing demand index forecasting")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common_flags()
    S = argparse.SUPPRESS

    p = _add(sub, "synth", cmd_synth, common, "Generate a synthetic event corpus", None)
    p.add_argument("--weeks", type=int, default=S, help="Number of weeks (default 156)")

    p = _add(sub, "aggregate", cmd_aggregate, common, "Aggregate an event CSV into weekly counts", "weekly.csv")
    p.add_argument("--events", type=Path, required=True, help="Event CSV")

    p = _add(sub, "indices", cmd_indices, common, "Compute HDI and SI", "indices.csv")
    _weekly_flag(p)

    p = _add(sub, "decompose", cmd_decompose, common, "Seasonal decomposition of one series", "decomposition.csv")
    _weekly_flag(p)
    p.add_argument("--series", choices=SERIES_NAMES, default=S)
    p.add_argument("--iterations", type=int, default=S)
    p.add_argument("--peak-window", dest="peak_window", type=int, default=S)

    p = _add(sub, "xcorr", cmd_xcorr, common, "Cross-correlation of two series", "xcorr.csv")
    _weekly_flag(p)
    p.add_argument("--pair", nargs=2, metavar=("LEADING", "LAGGING"), default=S)
    p.add_argument("--max-lag", dest="max_lag", type=int, default=S)

    p = _add(sub, "design", cmd_design, common, "Build the lagged design matrix", "design.csv")
    _weekly_flag(p)
    _lag_flags(p)

    p = _add(sub, "fit-linear", cmd_fit_linear, common, "Fit OLS or forward stepwise regression", "linear.json")
    _weekly_flag(p)
    _lag_flags(p)
    _split_flags(p)
    p.add_argument("--criterion", choices=["aic", "pvalue", "none"], default=S)
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--folds", type=int, default=S)

    p = _add(sub, "fit-lasso", cmd_fit_lasso, common, "Fit a LAR or lasso path", "lasso.json")
    _weekly_flag(p)
    _lag_flags(p)
    _split_flags(p)
    p.add_argument("--mode", dest="lasso_mode", choices=["lar", "lasso"], default=S)
    p.add_argument("--lambda", dest="lam", type=float, default=S, help="Penalty (default: chosen by CV)")

    p = _add(sub, "fit-arima", cmd_fit_arima, common, "Fit seasonal ARIMA, ARIMAX or Fourier regression", "arima.json")
    _weekly_flag(p)
    p.add_argument("--kind", choices=["univariate", "arimax", "harmonic"], default=S)
    p.add_argument("--spec", default=S, help="Fixed orders 'p,d,q:P,D,Q:s' (skips the grid)")
    p.add_argument("--grid", default=S, help="Specs separated by '|' or whitespace")
    p.add_argument("--target", choices=["identity", "hdi_sqrt"], default=S)
    p.add_argument("--k-max", dest="k_max", type=int, default=S)
    p.add_argument("--no-exog", dest="exog", action="store_false", default=S,
                   help="Harmonic regression on trend and Fourier terms only (default: with SI lags 5-20)")
    p.add_argument("--fill", choices=["persistence", "model"], default=S)

    p = _add(sub, "fit-ensemble", cmd_fit_ensemble, common, "Fit the linear + CART + MLP ensemble", "ensemble.json")
    _weekly_flag(p)
    _lag_flags(p)
    _split_flags(p)
    p.add_argument("--protocol", choices=["fixed", "validation", "holdout"], default=S)
    p.add_argument("--weights", type=float, nargs=3, default=S)
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--hidden", type=int, default=S)
    p.add_argument("--learn-rate", dest="learn_rate", type=float, default=S)
    p.add_argument("--max-depth", dest="max_depth", type=int, default=S)
    p.add_argument("--min-leaf", dest="min_leaf", type=int, default=S)

    p = _add(sub, "forecast", cmd_forecast, common, "Forecast from a fitted model artifact", "forecast.csv")
    p.add_argument("--model", type=Path, required=True, help="Model JSON")
    _weekly_flag(p, required=False)
    p.add_argument("--horizon", type=int, default=S)
    p.add_argument("--level", type=float, default=S)
    p.add_argument("--fill", choices=["persistence", "model"], default=S)

    p = _add(sub, "evaluate", cmd_evaluate, common, "Rolling-origin or hold-out evaluation of a model", "report.json")
    p.add_argument("--model", type=Path, required=True, help="Model JSON")
    _weekly_flag(p)
    _split_flags(p)
    p.add_argument("--horizon", type=int, default=S)
    p.add_argument("--min-train", dest="min_train", type=int, default=S)
    p.add_argument("--fill", choices=["persistence", "model"], default=S)

    p = _add(sub, "report", cmd_report, common, "Model comparison bundle", "report")
    _weekly_flag(p)
    p.add_argument("--horizon", type=int, default=S)
    p.add_argument("--min-train", dest="min_train", type=int, default=S)
    p.add_argument("--spec", default=S, help="Univariate seasonal ARIMA orders")
    p.add_argument("--no-exog", dest="exog", action="store_false", default=S,
                   help="Fourier row without the lagged SI regressors")
    return parser


def _overrides(args: argparse.Namespace) -> Dict:
    values = vars(args)
    overrides = {key: value for key, value in values.items() if key in RunConfig.model_fields}
    for key in ("pair", "weights"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    synth = {}
    if "weeks" in values:
        synth["n_weeks"] = values["weeks"]
    if "seed" in values:
        synth["seed"] = values["seed"]
    if synth:
        overrides["synth"] = synth
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        config = load_config(args.config, _overrides(args))
    except (ValidationError, ValueError) as e:
        print(f"housing-demand: invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"housing-demand: cannot read config {e.filename}: {e.strerror}", file=sys.stderr)
        return EXIT_USAGE

    try:
        out = args.handler(args, config)
        write_config_echo(config, out)
    except HousingDemandError as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_DATA
    except OSError as e:
        logger.error("%s failed on %s: %s", args.command, e.filename, e.strerror)
        return EXIT_DATA
    logger.info("%s wrote %s", args.command, out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
