"""
Seasonal ARIMA and regression with ARIMA errors.

    y_t = x_t' beta + eta_t,    phi(B) Phi(B^s) (1 - B)^d (1 - B^s)^D eta_t = theta(B) Theta(B^s) w_t

y and every regressor are differenced, the ARMA part of the differenced
errors is cast in state-space form and the exact Gaussian likelihood is
evaluated with a Kalman filter. beta is profiled out by generalized least
squares and the innovation variance is concentrated out, so the optimizer
only searches the ARMA coefficients. Those are mapped through partial
autocorrelations, which keeps every candidate stationary and invertible.
"""
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg, optimize, signal, stats

from .errors import ConvergenceError, DesignMatrixError, ForecastError, HousingDemandError, ModelFitError
from .indices import IndexSeries, inverse_transform
from .io_utils import atomic_write_text
from .tsa import DEFAULT_PERIOD, DesignMatrix, LagSpec, difference, differencing_polynomial, undifference

logger = logging.getLogger(__name__)

PARAM_BOUND = 30.0
MAX_ITERATIONS = 500
DEFAULT_LEVEL = 95.0
INTERCEPT = "intercept"
TARGETS = ("identity", "hdi_sqrt")


class ArimaSpec(BaseModel):
    """ARIMA(p,d,q)(P,D,Q)[s] orders."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    p: int = Field(0, ge=0)
    d: int = Field(0, ge=0)
    q: int = Field(0, ge=0)
    P: int = Field(0, ge=0)
    D: int = Field(0, ge=0)
    Q: int = Field(0, ge=0)
    s: int = Field(DEFAULT_PERIOD, ge=1)

    @classmethod
    def parse(cls, text: str) -> "ArimaSpec":
        """Parses "p,d,q:P,D,Q:s" (the seasonal part and period are optional)."""
        parts = [part for part in re.split(r"[:;]", text.strip()) if part]
        try:
            p, d, q = (int(v) for v in parts[0].split(","))
            P, D, Q = (int(v) for v in parts[1].split(",")) if len(parts) > 1 else (0, 0, 0)
            s = int(parts[2]) if len(parts) > 2 else DEFAULT_PERIOD
        except (ValueError, IndexError):
            raise ValueError(f"Invalid ARIMA spec {text!r}: expected 'p,d,q:P,D,Q:s'")
        return cls(p=p, d=d, q=q, P=P, D=D, Q=Q, s=s)

    def __str__(self) -> str:
        return f"ARIMA({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})[{self.s}]"

    def text(self) -> str:
        return f"{self.p},{self.d},{self.q}:{self.P},{self.D},{self.Q}:{self.s}"

    @property
    def n_arma(self) -> int:
        return self.p + self.q + self.P + self.Q

    @property
    def n_diff(self) -> int:
        return self.d + self.D * self.s

    @property
    def stationary(self) -> bool:
        return self.d == 0 and self.D == 0

    def fits_length(self, n: int) -> bool:
        return self.n_diff + max(self.p, self.P * self.s) < n


def default_grid(s: int = DEFAULT_PERIOD) -> List[ArimaSpec]:
    """(p,1,q)(0,1,0)[s] for p, q in 0..3; AICc is only comparable at a fixed differencing order."""
    return [ArimaSpec(p=p, d=1, q=q, P=0, D=1, Q=0, s=s) for p in range(4) for q in range(4)]


def arimax_grid(s: int = DEFAULT_PERIOD) -> List[ArimaSpec]:
    """(p,1,q)(0,1,0)[s] for p, q in 0..3, the regression counterpart of the univariate grid."""
    return [ArimaSpec(p=p, d=1, q=q, P=0, D=1, Q=0, s=s) for p in range(4) for q in range(4)]


def parse_grid(text: str) -> List[ArimaSpec]:
    """Parses specs separated by whitespace or '|'."""
    return [ArimaSpec.parse(part) for part in re.split(r"[|\s]+", text.strip()) if part]


# --- Parameter transforms ---

def pacf_to_ar(u: np.ndarray) -> np.ndarray:
    """Maps unconstrained values to the coefficients of a stationary AR polynomial (Durbin-Levinson)."""
    n = len(u)
    if n == 0:
        return np.zeros(0)
    r = u / np.sqrt(1.0 + u ** 2)
    y = np.zeros((n, n))
    for k in range(n):
        for i in range(k):
            y[k, i] = y[k - 1, i] + r[k] * y[k - 1, k - i - 1]
        y[k, k] = r[k]
    return -y[n - 1]


def ar_to_pacf(coefs: np.ndarray) -> np.ndarray:
    """Inverse of ``pacf_to_ar``; returns NaN for a non-stationary polynomial."""
    n = len(coefs)
    if n == 0:
        return np.zeros(0)
    y = np.zeros((n, n))
    y[n - 1] = -np.asarray(coefs, dtype=float)
    for k in range(n - 1, 0, -1):
        for i in range(k):
            y[k - 1, i] = (y[k, i] - y[k, k] * y[k, k - i - 1]) / (1.0 - y[k, k] ** 2)
    r = np.diagonal(y)
    with np.errstate(invalid="ignore", divide="ignore"):
        return r / np.sqrt(1.0 - r ** 2)


@dataclass(frozen=True)
class ArmaCoefficients:
    ar: np.ndarray
    ma: np.ndarray
    sar: np.ndarray
    sma: np.ndarray

    @classmethod
    def from_unconstrained(cls, spec: ArimaSpec, u: np.ndarray) -> "ArmaCoefficients":
        p, q, P = spec.p, spec.q, spec.P
        return cls(
            ar=pacf_to_ar(u[:p]),
            sar=pacf_to_ar(u[p:p + P]),
            ma=-pacf_to_ar(u[p + P:p + P + q]),
            sma=-pacf_to_ar(u[p + P + q:]),
        )

    def to_unconstrained(self) -> np.ndarray:
        return np.concatenate([ar_to_pacf(self.ar), ar_to_pacf(self.sar), ar_to_pacf(-self.ma), ar_to_pacf(-self.sma)])

    def polynomials(self, s: int) -> Tuple[np.ndarray, np.ndarray]:
        """Full AR and MA lag polynomials phi(B)Phi(B^s) and theta(B)Theta(B^s)."""
        seasonal_ar = np.zeros(len(self.sar) * s + 1)
        seasonal_ar[0] = 1.0
        seasonal_ar[s::s] = -self.sar
        seasonal_ma = np.zeros(len(self.sma) * s + 1)
        seasonal_ma[0] = 1.0
        seasonal_ma[s::s] = self.sma
        ar = np.convolve(np.r_[1.0, -self.ar], seasonal_ar)
        ma = np.convolve(np.r_[1.0, self.ma], seasonal_ma)
        return ar, ma


def _min_root_modulus(poly: np.ndarray) -> float:
    if len(poly) <= 1 or not np.any(poly[1:]):
        return np.inf
    roots = np.roots(poly[::-1])
    return float(np.min(np.abs(roots))) if roots.size else np.inf


# --- State space and likelihood ---

@dataclass
class _StateSpace:
    T: np.ndarray
    Z: np.ndarray
    P0: np.ndarray


def _state_space(ar: np.ndarray, ma: np.ndarray) -> _StateSpace:
    r = max(len(ar) - 1, len(ma))
    T = np.zeros((r, r))
    T[0, :len(ar) - 1] = -ar[1:]
    if r > 1:
        T[1:, :-1] = np.eye(r - 1)
    Z = np.zeros(r)
    Z[:len(ma)] = ma
    RQR = np.zeros((r, r))
    RQR[0, 0] = 1.0
    P0 = linalg.solve_discrete_lyapunov(T, RQR)
    return _StateSpace(T, Z, P0)


def _kalman(ss: _StateSpace, Y: np.ndarray):
    """
    Runs the filter on every column of Y at once (unit innovation variance).

    Returns innovations (n, m), their variances (n), and the predicted state
    and covariance for the step after the sample.
    """
    T, Z = ss.T, ss.Z
    n, m = Y.shape
    a = np.zeros((len(Z), m))
    P = ss.P0.copy()
    V = np.empty((n, m))
    F = np.empty(n)
    steady = False
    f, K = None, None
    for t in range(n):
        if not steady:
            PZ = P @ Z
            f = float(Z @ PZ)
            if not f > 0:
                raise ModelFitError(f"Non-positive prediction variance at t={t}.")
            K = (T @ PZ) / f
            P_next = T @ P @ (T - np.outer(K, Z)).T
            P_next[0, 0] += 1.0
        v = Y[t] - Z @ a
        V[t] = v
        F[t] = f
        a = T @ a + np.outer(K, v)
        if not steady:
            steady = np.max(np.abs(P_next - P)) < 1e-12
            P = P_next
    return V, F, a, P


@dataclass
class _Profile:
    loglik: float
    beta: np.ndarray
    sigma2: float


def _profile_likelihood(ss: _StateSpace, w: np.ndarray, Xd: Optional[np.ndarray]) -> _Profile:
    Y = w[:, None] if Xd is None else np.column_stack([w, Xd])
    V, F, _, _ = _kalman(ss, Y)
    E = V / np.sqrt(F)[:, None]
    if Xd is None:
        beta = np.zeros(0)
        e = E[:, 0]
    else:
        beta = np.linalg.lstsq(E[:, 1:], E[:, 0], rcond=None)[0]
        e = E[:, 0] - E[:, 1:] @ beta
    n = len(w)
    sigma2 = float(e @ e) / n
    if not sigma2 > 0:
        sigma2 = np.finfo(float).tiny
    loglik = -0.5 * n * (np.log(2.0 * np.pi) + np.log(sigma2) + 1.0) - 0.5 * float(np.sum(np.log(F)))
    return _Profile(loglik, beta, sigma2)


def aicc(loglik: float, k: int, n: int) -> float:
    """-2 loglik + 2k + 2k(k+1)/(n-k-1); k counts every estimated parameter including sigma^2."""
    if n - k - 1 <= 0:
        return np.inf
    return -2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1) / (n - k - 1)


# --- Fitting ---

@dataclass
class RegArimaFit:
    spec: ArimaSpec
    beta: Dict[str, float]
    ar: np.ndarray
    ma: np.ndarray
    sar: np.ndarray
    sma: np.ndarray
    sigma2: float
    loglik: float
    aicc: float
    aic: float
    n_effective: int
    n_params: int
    target: str = "identity"
    y: np.ndarray = field(default=None, repr=False)
    xreg: Optional[DesignMatrix] = field(default=None, repr=False)
    selection: List[dict] = field(default_factory=list)

    @property
    def coefficients(self) -> ArmaCoefficients:
        return ArmaCoefficients(self.ar, self.ma, self.sar, self.sma)

    @property
    def regressor_names(self) -> List[str]:
        """Columns the caller must supply at forecast time (the automatic intercept excluded)."""
        return [name for name in self.beta if not (name == INTERCEPT and self.has_auto_intercept)]

    @property
    def has_auto_intercept(self) -> bool:
        return INTERCEPT in self.beta and (self.xreg is None or INTERCEPT not in self.xreg.column_names)

    def to_artifact(self) -> dict:
        return {
            "model": "regarima",
            "spec": self.spec.model_dump(),
            "beta": dict(self.beta),
            "ar": self.ar.tolist(),
            "ma": self.ma.tolist(),
            "seasonal_ar": self.sar.tolist(),
            "seasonal_ma": self.sma.tolist(),
            "sigma2": self.sigma2,
            "loglik": self.loglik,
            "aicc": self.aicc,
            "aic": self.aic,
            "n_effective": self.n_effective,
            "n_params": self.n_params,
            "target": self.target,
            "selection": list(self.selection),
            "data": {
                "y": self.y.tolist(),
                "xreg": None if self.xreg is None else {
                    "columns": list(self.xreg.column_names),
                    "rows": self.xreg.rows.tolist(),
                },
            },
        }


def load_fit(payload: dict) -> RegArimaFit:
    """Rebuilds a fit (with the training data needed to forecast) from its artifact."""
    if payload.get("model") != "regarima":
        raise ModelFitError(f"Not a regression-with-ARIMA-errors artifact: model={payload.get('model')!r}.")
    xreg = payload["data"]["xreg"]
    return RegArimaFit(
        spec=ArimaSpec(**payload["spec"]),
        beta={k: float(v) for k, v in payload["beta"].items()},
        ar=np.array(payload["ar"], dtype=float),
        ma=np.array(payload["ma"], dtype=float),
        sar=np.array(payload["seasonal_ar"], dtype=float),
        sma=np.array(payload["seasonal_ma"], dtype=float),
        sigma2=float(payload["sigma2"]),
        loglik=float(payload["loglik"]),
        aicc=float(payload["aicc"]),
        aic=float(payload["aic"]),
        n_effective=int(payload["n_effective"]),
        n_params=int(payload["n_params"]),
        target=payload.get("target", "identity"),
        y=np.array(payload["data"]["y"], dtype=float),
        xreg=None if xreg is None else DesignMatrix(tuple(xreg["columns"]), np.array(xreg["rows"], dtype=float)),
        selection=list(payload.get("selection", [])),
    )


def _regressors(y: np.ndarray, xreg: Optional[DesignMatrix], spec: ArimaSpec) -> Tuple[List[str], Optional[np.ndarray]]:
    names: List[str] = []
    columns = []
    if xreg is not None:
        if xreg.n_rows != len(y):
            raise DesignMatrixError(f"Regressor rows ({xreg.n_rows}) do not align with y ({len(y)}).")
        names += list(xreg.column_names)
        columns.append(xreg.rows)
    if spec.stationary and INTERCEPT not in names:
        names.append(INTERCEPT)
        columns.append(np.ones((len(y), 1)))
    return names, (np.hstack(columns) if columns else None)


def _yule_walker(x: np.ndarray, order: int, step: int = 1) -> np.ndarray:
    if order == 0:
        return np.zeros(0)
    x = x - x.mean()
    n = len(x)
    lags = step * np.arange(order + 1)
    if lags[-1] >= n:
        return np.zeros(order)
    acov = np.array([x[:n - k] @ x[k:] / n for k in lags])
    if acov[0] <= 0:
        return np.zeros(order)
    try:
        return linalg.solve_toeplitz(acov[:-1], acov[1:])
    except (linalg.LinAlgError, ValueError):
        return np.zeros(order)


def _start_values(spec: ArimaSpec, eta: np.ndarray) -> np.ndarray:
    """Method-of-moments start: Yule-Walker for the AR parts, zero MA parts."""
    start = ArmaCoefficients(
        ar=_yule_walker(eta, spec.p),
        ma=np.zeros(spec.q),
        sar=_yule_walker(eta, spec.P, spec.s),
        sma=np.zeros(spec.Q),
    ).to_unconstrained()
    if not np.all(np.isfinite(start)):
        return np.zeros(spec.n_arma)
    return np.clip(start, -5.0, 5.0)


def _css_objective(u, spec: ArimaSpec, eta: np.ndarray) -> float:
    ar, ma = ArmaCoefficients.from_unconstrained(spec, u).polynomials(spec.s)
    n0 = len(ar) - 1
    e = signal.lfilter(ar, ma, eta)[n0:]
    sse = float(e @ e)
    if not np.isfinite(sse) or sse <= 0:
        return 1e10
    return 0.5 * len(e) * np.log(sse / len(e))


def _exact_objective(u, spec: ArimaSpec, w: np.ndarray, Xd: Optional[np.ndarray]) -> float:
    try:
        ar, ma = ArmaCoefficients.from_unconstrained(spec, u).polynomials(spec.s)
        value = -_profile_likelihood(_state_space(ar, ma), w, Xd).loglik
    except (HousingDemandError, linalg.LinAlgError, ValueError):
        return 1e10
    return value if np.isfinite(value) else 1e10


def _minimize(objective, start: np.ndarray, args: tuple, trace: List[str], phase: str):
    iteration = [0]

    def record(xk):
        iteration[0] += 1
        trace.append(f"{phase} iter {iteration[0]}: params={np.round(xk, 6).tolist()}")

    return optimize.minimize(
        objective, start, args=args, method="L-BFGS-B",
        bounds=[(-PARAM_BOUND, PARAM_BOUND)] * len(start),
        options={"maxiter": MAX_ITERATIONS}, callback=record,
    )


def _acceptable(res, spec: ArimaSpec) -> bool:
    if not np.isfinite(res.fun) or res.fun >= 1e10 or res.status == 1:
        return False
    ar, ma = ArmaCoefficients.from_unconstrained(spec, res.x).polynomials(spec.s)
    return _min_root_modulus(ar) > 1.0 + 1e-8 and _min_root_modulus(ma) > 1.0 + 1e-8


def fit_regarima(
    y: Sequence[float],
    xreg: Optional[DesignMatrix] = None,
    spec: ArimaSpec = ArimaSpec(),
    target: str = "identity",
    seed: int = 0,
) -> RegArimaFit:
    """
    Fits a regression with seasonal ARIMA errors by exact maximum likelihood.

    A conditional-sum-of-squares pass from Yule-Walker start values seeds the
    exact-likelihood search. If the search fails it is restarted once from a
    seeded perturbation. When d = D = 0 an intercept column is added.

    Args:
        y: Response series (sqrt(HDI) for demand models).
        xreg: Regressors aligned row-for-row with y.
        spec: Model orders.
        target: "hdi_sqrt" if y is sqrt(HDI); forecasts are then squared back.
        seed: Seed of the restart perturbation.

    Raises:
        ModelFitError: If the series is too short for the model orders and regressors.
        ConvergenceError: If both searches fail; carries the iteration trace.
    """
    if target not in TARGETS:
        raise ModelFitError(f"Invalid target: {target!r} (expected one of {TARGETS}).")
    y = np.asarray(y, dtype=float)
    names, X = _regressors(y, xreg, spec)
    k_x = 0 if X is None else X.shape[1]
    needed = spec.n_diff + 3 * spec.n_arma + (0 if xreg is None else xreg.n_cols)
    if len(y) <= needed or not spec.fits_length(len(y)):
        raise ModelFitError(f"Series too short for {spec}: {len(y)} observations, need more than {needed}.")

    w = difference(y, spec.d, spec.D, spec.s)
    Xd = None if X is None else np.column_stack([difference(col, spec.d, spec.D, spec.s) for col in X.T])
    n = len(w)
    if Xd is not None and np.linalg.matrix_rank(Xd) < k_x:
        raise ModelFitError(f"Differenced regressors are collinear: {names}.", columns=names)

    trace: List[str] = []
    u = np.zeros(0)
    if spec.n_arma:
        beta0 = np.zeros(0) if Xd is None else np.linalg.lstsq(Xd, w, rcond=None)[0]
        eta = w if Xd is None else w - Xd @ beta0
        start = _start_values(spec, eta)
        css = _minimize(_css_objective, start, (spec, eta), trace, "css")
        if np.all(np.isfinite(css.x)):
            start = css.x
        res = _minimize(_exact_objective, start, (spec, w, Xd), trace, "exact")
        if not _acceptable(res, spec):
            logger.warning("%s: exact likelihood search failed (%s); retrying from a perturbed start", spec, res.message)
            rng = np.random.default_rng(seed)
            perturbed = np.clip(start + rng.normal(0.0, 0.5, size=len(start)), -5.0, 5.0)
            res = _minimize(_exact_objective, perturbed, (spec, w, Xd), trace, "retry")
            if not _acceptable(res, spec):
                raise ConvergenceError(f"{spec}: likelihood maximization did not converge ({res.message}).", trace=trace)
        u = res.x

    coefs = ArmaCoefficients.from_unconstrained(spec, u)
    profile = _profile_likelihood(_state_space(*coefs.polynomials(spec.s)), w, Xd)
    k = spec.n_arma + k_x + 1
    fit = RegArimaFit(
        spec=spec,
        beta=dict(zip(names, map(float, profile.beta))),
        ar=coefs.ar, ma=coefs.ma, sar=coefs.sar, sma=coefs.sma,
        sigma2=profile.sigma2,
        loglik=profile.loglik,
        aicc=aicc(profile.loglik, k, n),
        aic=-2.0 * profile.loglik + 2.0 * k,
        n_effective=n,
        n_params=k,
        target=target,
        y=y.copy(),
        xreg=xreg,
    )
    logger.debug("%s: loglik=%.4f aicc=%.4f sigma2=%.6g", spec, fit.loglik, fit.aicc, fit.sigma2)
    return fit


def _try_fit(y, xreg, spec, target, seed):
    try:
        return fit_regarima(y, xreg, spec, target, seed), None
    except HousingDemandError as e:
        return None, str(e)


def auto_select(
    y: Sequence[float],
    xreg: Optional[DesignMatrix] = None,
    grid: Optional[Sequence[ArimaSpec]] = None,
    target: str = "identity",
    seed: int = 0,
    n_jobs: int = 1,
) -> RegArimaFit:
    """
    Fits every spec of the grid and keeps the minimum-AICc fit.

    Ties go to fewer parameters, then to grid order. Failed fits are skipped
    with a warning and recorded in the winner's ``selection`` list.

    Raises:
        ModelFitError: If the grid is empty or every fit fails.
    """
    grid = list(grid) if grid is not None else default_grid()
    if not grid:
        raise ModelFitError("Empty ARIMA grid.")
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_try_fit)(y, xreg, spec, target, seed) for spec in grid
    )
    selection, best, best_key = [], None, None
    for i, (spec, (fit, error)) in enumerate(zip(grid, results)):
        if fit is None:
            logger.warning("Skipped %s: %s", spec, error)
            selection.append({"spec": spec.text(), "error": error})
            continue
        selection.append({"spec": spec.text(), "aicc": fit.aicc})
        key = (fit.aicc, fit.n_params, i)
        if best_key is None or key < best_key:
            best, best_key = fit, key
    if best is None:
        raise ModelFitError(f"All {len(grid)} ARIMA fits failed.")
    best.selection = selection
    logger.info("Selected %s with AICc %.4f from %d candidates", best.spec, best.aicc, len(grid))
    return best


# --- Forecasting ---

@dataclass
class Forecast:
    horizon: int
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float = DEFAULT_LEVEL
    point_transformed: Optional[np.ndarray] = None
    lower_transformed: Optional[np.ndarray] = None
    upper_transformed: Optional[np.ndarray] = None
    xreg_fill: List[str] = field(default_factory=list)

    @property
    def widths(self) -> np.ndarray:
        """Interval widths on the model (transformed) scale."""
        return self.upper_transformed - self.lower_transformed

    def to_frame(self) -> pd.DataFrame:
        fill = self.xreg_fill or [""] * self.horizon
        return pd.DataFrame({
            "step": np.arange(1, self.horizon + 1),
            "point": self.point,
            "lower": self.lower,
            "upper": self.upper,
            "level": self.level,
            "xreg_fill": fill,
        })


def psi_weights(fit: RegArimaFit, h: int) -> np.ndarray:
    """First h coefficients of theta(B)Theta(B^s) / (phi(B)Phi(B^s)(1-B)^d(1-B^s)^D)."""
    ar, ma = fit.coefficients.polynomials(fit.spec.s)
    den = np.convolve(ar, differencing_polynomial(fit.spec.d, fit.spec.D, fit.spec.s))
    impulse = np.zeros(h)
    impulse[0] = 1.0
    return signal.lfilter(ma, den, impulse)


def _future_regressors(fit: RegArimaFit, h: int, xreg_future: Optional[DesignMatrix]) -> Optional[np.ndarray]:
    if not fit.beta:
        return None
    required = fit.regressor_names
    columns = []
    if required:
        if xreg_future is None:
            raise ForecastError(f"Missing future regressors: the fit needs {required}.")
        if xreg_future.n_rows != h:
            raise ForecastError(f"Future regressors have {xreg_future.n_rows} rows, expected {h}.")
        try:
            columns.append(xreg_future.select(required).rows)
        except DesignMatrixError as e:
            raise ForecastError(f"Missing future regressors: {e}")
    if fit.has_auto_intercept:
        columns.append(np.ones((h, 1)))
    return np.hstack(columns)


def forecast(
    fit: RegArimaFit,
    h: int,
    xreg_future: Optional[DesignMatrix] = None,
    level: float = DEFAULT_LEVEL,
    xreg_fill: Optional[List[str]] = None,
) -> Forecast:
    """
    h-step forecasts with prediction intervals.

    The regression errors are forecast by running the filter over the
    differenced history and undifferencing; regressors enter through beta.
    Interval half-widths are z * sigma * sqrt(sum psi_j^2). For sqrt(HDI)
    fits, the point and both endpoints are squared back to the HDI scale.

    Raises:
        ForecastError: On h < 1, a bad level or missing future regressors.
    """
    if h < 1:
        raise ForecastError(f"Invalid horizon: {h} must be >= 1.")
    if not 0 < level < 100:
        raise ForecastError(f"Invalid level: {level} must be in (0, 100).")
    spec = fit.spec
    names = list(fit.beta)
    beta = np.array([fit.beta[name] for name in names])
    X_future = _future_regressors(fit, h, xreg_future)

    y = fit.y
    eta = y.copy()
    if names:
        _, X = _regressors(y, fit.xreg, spec)
        eta = y - X @ beta
    w = difference(eta, spec.d, spec.D, spec.s)
    ss = _state_space(*fit.coefficients.polynomials(spec.s))
    _, _, a, _ = _kalman(ss, w[:, None])
    w_future = np.empty(h)
    for i in range(h):
        w_future[i] = float(ss.Z @ a[:, 0])
        a = ss.T @ a
    m = spec.n_diff
    eta_future = undifference(w_future, eta[len(eta) - m:], spec.d, spec.D, spec.s)[m:]
    point = eta_future + (0.0 if X_future is None else X_future @ beta)

    psi = psi_weights(fit, h)
    z = stats.norm.ppf(0.5 + level / 200.0)
    half = z * np.sqrt(fit.sigma2 * np.cumsum(psi ** 2))
    lower, upper = point - half, point + half

    if fit.target == "hdi_sqrt":
        to_hdi = lambda v: np.atleast_1d(inverse_transform(np.maximum(v, 0.0)))
        shown = (to_hdi(point), to_hdi(lower), to_hdi(upper))
    else:
        shown = (point.copy(), lower.copy(), upper.copy())
    return Forecast(h, *shown, level=level, point_transformed=point, lower_transformed=lower,
                    upper_transformed=upper, xreg_fill=list(xreg_fill or []))


def write_forecast_csv(fc: Forecast, path) -> None:
    atomic_write_text(path, fc.to_frame().to_csv(index=False, float_format="%.10g", lineterminator="\n"))


# --- Future lagged regressors ---

SI_GRID = (
    ArimaSpec(p=0, d=1, q=1, D=1),
    ArimaSpec(p=1, d=1, q=0, D=1),
    ArimaSpec(p=0, d=1, q=0, D=1),
)


@dataclass
class FutureXreg:
    design: DesignMatrix
    fill: np.ndarray  # (h, columns) of "known" / "persistence" / "model"

    def step_labels(self) -> List[str]:
        """Per-step summary for the forecast CSV."""
        labels = []
        for row in self.fill:
            filled = [kind for kind in row if kind != "known"]
            labels.append("known" if not filled else f"{filled[0]}:{len(filled)}")
        return labels


def forecast_si(idx: IndexSeries, h: int, grid: Sequence[ArimaSpec] = SI_GRID, n_jobs: int = 1) -> np.ndarray:
    """Point forecasts of SI from a univariate seasonal ARIMA picked by AICc."""
    fit = auto_select(idx.si, None, [s for s in grid if s.fits_length(len(idx))], n_jobs=n_jobs)
    return forecast(fit, h).point


def lagged_xreg_future(
    idx: IndexSeries,
    lag_spec: LagSpec,
    h: int,
    fill: str = "persistence",
    si_forecast: Optional[Sequence[float]] = None,
) -> FutureXreg:
    """
    Lagged SI/HDI regressors for forecast steps 1..h.

    For step i and lag L the value is known history when L >= i; otherwise
    it is filled with the last observed value ("persistence") or, for SI
    lags, with a univariate SI forecast ("model"). The week column follows
    the calendar; median DOM is held at its last value.

    Raises:
        ForecastError: On h < 1 or an unknown fill mode.
    """
    if h < 1:
        raise ForecastError(f"Invalid horizon: {h} must be >= 1.")
    if fill not in ("persistence", "model"):
        raise ForecastError(f"Invalid fill mode: {fill!r} (expected 'persistence' or 'model').")
    if lag_spec.include_median_dom:
        raise ForecastError("median_dom has no future values; drop it from the lag spec.")
    n = len(idx)
    if fill == "model" and lag_spec.si_lags:
        si_future = np.asarray(si_forecast if si_forecast is not None else forecast_si(idx, h), dtype=float)
        if len(si_future) < h:
            raise ForecastError(f"SI forecast has {len(si_future)} steps, expected {h}.")
    else:
        si_future = None

    names = lag_spec.column_names()
    rows = np.empty((h, len(names)))
    kinds = np.empty((h, len(names)), dtype=object)
    last_week = int(idx.weeks[-1])
    for i in range(1, h + 1):
        col = 0
        for L in lag_spec.si_lags:
            if L >= i:
                rows[i - 1, col], kinds[i - 1, col] = idx.si[n - 1 + i - L], "known"
            elif si_future is not None:
                rows[i - 1, col], kinds[i - 1, col] = si_future[i - L - 1], "model"
            else:
                rows[i - 1, col], kinds[i - 1, col] = idx.si[-1], "persistence"
            col += 1
        if lag_spec.include_week_number:
            rows[i - 1, col], kinds[i - 1, col] = (last_week + i - 1) % 52 + 1, "known"
            col += 1
        for L in lag_spec.hdi_lags:
            if L >= i:
                rows[i - 1, col], kinds[i - 1, col] = idx.hdi[n - 1 + i - L], "known"
            else:
                rows[i - 1, col], kinds[i - 1, col] = idx.hdi[-1], "persistence"
            col += 1
    filled = int(np.sum(kinds != "known"))
    if filled:
        logger.info("Filled %d of %d future regressor cells (%s)", filled, kinds.size, fill)
    return FutureXreg(DesignMatrix(tuple(names), rows, None, np.arange(n, n + h)), kinds)
