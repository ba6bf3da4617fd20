"""Weekly-differenced ARMA forecaster.

The level series x is differenced at a lag of one week, y_t = x_t - x_{t-s},
and y is modelled as

    y_t = c + sum_i ar[i] * y_{t-i} + e_t + sum_j ma[j] * e_{t-j}

with coefficients estimated by the two-stage Hannan-Rissanen least-squares
procedure. Level forecasts are recovered by adding back last week's level.
Prediction intervals are ``predicted +/- z_crit * sigma_hat`` where
``sigma_hat`` is a MAD-scaled spread of calibration forecast errors.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .core import Series
from .sanitize import SanitizedTraining

MAD_SCALE = 1.4826
DEFAULT_Z_CRIT = 3.0
DEFAULT_P_MAX = 6
DEFAULT_Q_MAX = 3
LONG_AR_MAX = 20
MODEL_FORMAT = "ibrwatch-sarima"
MODEL_VERSION = 1


class DegenerateFitError(ValueError):
    pass


class SelectionError(RuntimeError):
    pass


class HistoryError(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class ModelOrder:
    p: int
    q: int

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ValueError(f"negative ARMA order {self}")
        if self.p == 0 and self.q == 0:
            raise ValueError("ARMA order (0, 0) is not a model")

    def __str__(self):
        return f"({self.p},{self.q})"


def order_grid(p_max: int = DEFAULT_P_MAX, q_max: int = DEFAULT_Q_MAX) -> list[ModelOrder]:
    return [ModelOrder(p, q) for p in range(p_max + 1) for q in range(q_max + 1) if p or q]


def seasonal_difference(x, s: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) <= s:
        raise ValueError(f"need more than {s} values to difference at lag {s}, got {len(x)}")
    if np.isnan(x).any():
        raise ValueError("cannot difference a sequence with missing values")
    return x[s:] - x[:-s]


def undifference(y_forecasts, recent_levels, s: int) -> np.ndarray:
    """Level forecasts from differenced forecasts and the last ``s`` (or more) levels."""
    y_forecasts = np.asarray(y_forecasts, dtype=float)
    recent_levels = np.asarray(recent_levels, dtype=float)
    h = len(y_forecasts)
    if h > s:
        raise ValueError(f"horizon {h} exceeds the seasonal period {s}")
    if len(recent_levels) < s:
        raise ValueError(f"need the last {s} levels, got {len(recent_levels)}")
    base = recent_levels[len(recent_levels) - s:len(recent_levels) - s + h]
    return y_forecasts + base


def _lagmat(v: np.ndarray, lags: int, start: int) -> np.ndarray:
    """Columns v[t-1], ..., v[t-lags] for t = start .. len(v)-1."""
    n = len(v)
    return np.column_stack([v[start - i:n - i] for i in range(1, lags + 1)]) if lags else np.empty((n - start, 0))


def _ols(target: np.ndarray, regressors: np.ndarray) -> np.ndarray:
    X = np.column_stack([np.ones(len(target)), regressors])
    beta, _, rank, _ = np.linalg.lstsq(X, target, rcond=None)
    if rank < X.shape[1]:
        raise DegenerateFitError(f"singular regression (rank {rank} < {X.shape[1]})")
    return beta


def _roots_inside(poly_tail: Sequence[float]) -> bool:
    """True when every root of z^k + a_1 z^(k-1) + ... + a_k lies strictly inside the unit circle."""
    if len(poly_tail) == 0:
        return True
    return bool(np.all(np.abs(np.roots(np.r_[1.0, poly_tail])) < 1.0))


def is_stationary(ar: Sequence[float]) -> bool:
    # roots of 1 - ar_1 z - ... outside the unit circle <=> reciprocals inside
    return _roots_inside(-np.asarray(ar, dtype=float))


def is_invertible(ma: Sequence[float]) -> bool:
    return _roots_inside(np.asarray(ma, dtype=float))


def arma_residuals(y, ar, ma, intercept: float) -> np.ndarray:
    """One-step-ahead in-sample errors, with zero pre-sample innovations."""
    y = np.asarray(y, dtype=float)
    p = len(ar)
    v = np.zeros_like(y)
    v[p:] = y[p:] - intercept
    if p:
        v[p:] -= _lagmat(y, p, p) @ np.asarray(ar, dtype=float)
    return lfilter([1.0], np.r_[1.0, np.asarray(ma, dtype=float)], v)


@dataclass(frozen=True, eq=False)
class ArmaFit:
    order: ModelOrder
    ar: tuple[float, ...]
    ma: tuple[float, ...]
    intercept: float
    residuals: np.ndarray = field(repr=False)
    stationary: bool
    invertible: bool


def fit_arma(y, order: ModelOrder) -> ArmaFit:
    """Hannan-Rissanen estimate of an ARMA(p, q) model with intercept.

    Stage one fits a long autoregression by least squares to approximate the
    innovations; stage two regresses y_t on its own p lags and q lags of those
    innovations. Non-stationary or non-invertible estimates are returned with
    the corresponding flag cleared, not repaired.
    """
    y = np.asarray(y, dtype=float)
    p, q = order.p, order.q
    n = len(y)
    if n < 10 * (p + q + 1):
        raise ValueError(f"ARMA{order} needs at least {10 * (p + q + 1)} points, got {n}")
    if np.ptp(y) == 0:
        raise DegenerateFitError("input has zero variance")

    if q == 0:
        beta = _ols(y[p:], _lagmat(y, p, p))
    else:
        m = max(min(LONG_AR_MAX, n // 10), 1)
        long_ar = _ols(y[m:], _lagmat(y, m, m))
        innov = np.zeros(n)
        innov[m:] = y[m:] - long_ar[0] - _lagmat(y, m, m) @ long_ar[1:]
        start = m + q
        beta = _ols(y[start:], np.column_stack([_lagmat(y, p, start), _lagmat(innov, q, start)]))

    intercept = float(beta[0])
    ar = tuple(float(b) for b in beta[1:1 + p])
    ma = tuple(float(b) for b in beta[1 + p:])
    return ArmaFit(
        order=order,
        ar=ar,
        ma=ma,
        intercept=intercept,
        residuals=arma_residuals(y, ar, ma, intercept),
        stationary=is_stationary(ar),
        invertible=is_invertible(ma),
    )


def rmse(predicted, actual) -> float:
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {actual.shape}")
    present = ~np.isnan(actual)
    if not present.any():
        raise ValueError("no present values to score")
    return float(np.sqrt(np.mean((predicted[present] - actual[present]) ** 2)))


def robust_sigma(residuals, floor: float = 1e-6, min_count: int = 8) -> float:
    """Normal-consistent scale estimate: 1.4826 * MAD, never below ``floor``."""
    r = np.asarray(residuals, dtype=float)
    if len(r) < min_count:
        raise ValueError(f"need at least {min_count} residuals, got {len(r)}")
    mad = np.median(np.abs(r - np.median(r)))
    return max(MAD_SCALE * float(mad), floor)


def sigma_floor_for(mean_level: float) -> float:
    return 1e-6 * max(1.0, mean_level)


@dataclass(frozen=True)
class Forecast:
    bin_index: int
    predicted: float
    lower: float
    upper: float


class SarimaModel:
    """ARMA coefficients plus the rolling level/innovation history they act on.

    A model is owned by one detector at a time: ``observe`` mutates the
    history in place.
    """

    def __init__(self, order, seasonal_period, ar, ma, intercept, sigma_hat,
                 z_crit=DEFAULT_Z_CRIT, levels=(), residuals=()):
        if len(ar) != order.p or len(ma) != order.q:
            raise ValueError("coefficient counts do not match the model order")
        if sigma_hat <= 0:
            raise ValueError("sigma_hat must be positive")
        self.order = order
        self.seasonal_period = int(seasonal_period)
        self.ar = tuple(float(a) for a in ar)
        self.ma = tuple(float(m) for m in ma)
        self.intercept = float(intercept)
        self.sigma_hat = float(sigma_hat)
        self.z_crit = float(z_crit)
        s, p, q = self.seasonal_period, order.p, order.q
        self.levels: deque[float] = deque((float(v) for v in levels), maxlen=s + max(p, q))
        self.residuals: deque[float] = deque((float(e) for e in residuals), maxlen=q)
        self._ys: deque[float] = deque(maxlen=p)
        if len(self.levels) >= s + p:
            lv = list(self.levels)
            for i in range(len(lv) - p, len(lv)):
                self._ys.append(lv[i] - lv[i - s])

    @classmethod
    def from_fit(cls, fit: ArmaFit, levels, seasonal_period: int, sigma_hat: float,
                 z_crit: float = DEFAULT_Z_CRIT) -> SarimaModel:
        """Model whose history ends at the last of ``levels``, the series ``fit`` was trained on."""
        return cls(fit.order, seasonal_period, fit.ar, fit.ma, fit.intercept, sigma_hat, z_crit,
                   levels=list(levels)[-(seasonal_period + max(fit.order.p, fit.order.q)):],
                   residuals=fit.residuals[len(fit.residuals) - fit.order.q:])

    @property
    def history_ready(self) -> bool:
        return (len(self.levels) >= self.seasonal_period + self.order.p
                and len(self.residuals) == self.order.q)

    def copy(self, **changes) -> SarimaModel:
        kw = dict(order=self.order, seasonal_period=self.seasonal_period, ar=self.ar, ma=self.ma,
                  intercept=self.intercept, sigma_hat=self.sigma_hat, z_crit=self.z_crit,
                  levels=self.levels, residuals=self.residuals)
        kw.update(changes)
        return SarimaModel(**kw)

    def _one_step(self) -> float:
        pred = self.intercept
        for a, y in zip(self.ar, reversed(self._ys)):
            pred += a * y
        for m, e in zip(self.ma, reversed(self.residuals)):
            pred += m * e
        return pred

    def observe(self, level: float) -> None:
        """Append a level (observed or inpainted) and the innovation it implies."""
        if not self.history_ready:
            raise HistoryError("model history is not populated")
        y = level - self.levels[-self.seasonal_period]
        if self.order.q:
            self.residuals.append(y - self._one_step())
        if self.order.p:
            self._ys.append(y)
        self.levels.append(float(level))

    def forecast(self, horizon: int, start_index: int = 0) -> list[Forecast]:
        """Recursive multi-step forecast with future shocks set to zero."""
        s = self.seasonal_period
        if not 1 <= horizon <= s:
            raise ValueError(f"horizon must lie in [1, {s}], got {horizon}")
        if not self.history_ready:
            raise HistoryError("model history is not populated")
        ys = list(self._ys)
        es = list(self.residuals)
        n_lv = len(self.levels)
        base = list(itertools.islice(self.levels, n_lv - s, n_lv - s + horizon))
        half = self.z_crit * self.sigma_hat
        out = []
        for k in range(horizon):
            yhat = self.intercept
            for i, a in enumerate(self.ar, start=1):
                yhat += a * ys[-i]
            for j, m in enumerate(self.ma, start=1):
                yhat += m * es[-j]
            ys.append(yhat)
            es.append(0.0)
            x = max(yhat + base[k], 0.0)
            out.append(Forecast(start_index + k, x, max(x - half, 0.0), x + half))
        return out

    def dumps(self) -> str:
        def seq(v):
            return " ".join(repr(float(x)) for x in v)

        lines = [
            f"format = {MODEL_FORMAT}",
            f"version = {MODEL_VERSION}",
            f"p = {self.order.p}",
            f"q = {self.order.q}",
            f"seasonal_period = {self.seasonal_period}",
            f"ar = {seq(self.ar)}",
            f"ma = {seq(self.ma)}",
            f"intercept = {self.intercept!r}",
            f"sigma_hat = {self.sigma_hat!r}",
            f"z_crit = {self.z_crit!r}",
            f"levels = {seq(self.levels)}",
            f"residuals = {seq(self.residuals)}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> SarimaModel:
        kv = {}
        for line in text.splitlines():
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"malformed model line: {line!r}")
            kv[key.strip()] = value.strip()
        if kv.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a {MODEL_FORMAT} model")
        if int(kv.get("version", -1)) != MODEL_VERSION:
            raise ValueError(f"unsupported model version {kv.get('version')}")

        def seq(key):
            return [float(x) for x in kv[key].split()]

        return cls(ModelOrder(int(kv["p"]), int(kv["q"])), int(kv["seasonal_period"]),
                   seq("ar"), seq("ma"), float(kv["intercept"]), float(kv["sigma_hat"]),
                   float(kv["z_crit"]), levels=seq("levels"), residuals=seq("residuals"))

    def __repr__(self):
        return (f"SarimaModel(order={self.order}, s={self.seasonal_period}, ar={self.ar}, "
                f"ma={self.ma}, intercept={self.intercept:.4g}, sigma_hat={self.sigma_hat:.4g}, "
                f"z_crit={self.z_crit})")


def forecast(model: SarimaModel, horizon: int, start_index: int = 0) -> list[Forecast]:
    return model.forecast(horizon, start_index)


def rolling_forecast(model: SarimaModel, observations, batch_size: int = 12):
    """Hour-by-hour forecasts over ``observations``, feeding each one back.

    Missing observations are replaced by their forecast. Returns the level
    forecasts; ``model`` ends positioned after the last observation.
    """
    obs = np.asarray(observations, dtype=float).tolist()
    predicted = []
    for b in range(0, len(obs), batch_size):
        batch = model.forecast(min(batch_size, len(obs) - b), b)
        for f in batch:
            x = obs[f.bin_index]
            predicted.append(f.predicted)
            model.observe(f.predicted if math.isnan(x) else x)
    return np.array(predicted)


@dataclass
class Candidate:
    order: ModelOrder
    rmse: float | None
    status: str  # "ok", "degenerate", "non-stationary", "non-invertible", "unstable"
    model: SarimaModel | None = field(default=None, repr=False)


@dataclass
class Selection:
    order: ModelOrder
    model: SarimaModel
    candidates: list[Candidate]

    def __iter__(self):
        return iter((self.order, self.model))


def _zero_model_fit(y: np.ndarray, order: ModelOrder) -> ArmaFit:
    # constant differenced training: the exact predictor is the constant itself
    c = float(y[0])
    return ArmaFit(order, (0.0,) * order.p, (0.0,) * order.q, c, np.zeros_like(y), True, True)


def select_order(training: SanitizedTraining, calibration: Series, *, p_max: int = DEFAULT_P_MAX,
                 q_max: int = DEFAULT_Q_MAX, z_crit: float = DEFAULT_Z_CRIT,
                 batch_size: int = 12, tie_rtol: float = 1e-9) -> Selection:
    """Grid-search (p, q) by calibration RMSE of rolling hourly forecasts.

    Each candidate is fitted on the differenced sanitized training data, then
    run over the calibration slice; the winner's ``sigma_hat`` is the MAD of
    its calibration forecast errors. RMSE values within ``tie_rtol`` of the
    best count as tied and go to the smaller p + q, then the smaller p.
    """
    s = training.grid.bins_per_week
    cal = calibration.values
    if np.mean(np.isnan(cal)) > 0.2:
        raise SelectionError(f"{calibration.id}: more than 20% of calibration bins are missing")
    y = seasonal_difference(training.values, s)
    constant = np.ptp(y) == 0
    floor = sigma_floor_for(training.mean_level)

    candidates = []
    for order in order_grid(p_max, q_max):
        if len(y) < 10 * (order.p + order.q + 1):
            continue
        try:
            fit = _zero_model_fit(y, order) if constant else fit_arma(y, order)
        except DegenerateFitError:
            candidates.append(Candidate(order, None, "degenerate"))
            continue
        if not fit.stationary:
            candidates.append(Candidate(order, None, "non-stationary"))
            continue
        if not fit.invertible:
            candidates.append(Candidate(order, None, "non-invertible"))
            continue
        model = SarimaModel.from_fit(fit, training.values, s, floor, z_crit)
        with np.errstate(all="ignore"):
            predicted = rolling_forecast(model, cal, batch_size)
            err = rmse(predicted, cal)
        if not math.isfinite(err):
            candidates.append(Candidate(order, None, "unstable"))
            continue
        present = ~np.isnan(cal)
        model.sigma_hat = robust_sigma(cal[present] - predicted[present], floor)
        candidates.append(Candidate(order, err, "ok", model))

    scored = [c for c in candidates if c.status == "ok"]
    if not scored:
        raise SelectionError(f"{calibration.id}: every candidate ARMA fit failed")
    best = min(c.rmse for c in scored)
    tied = [c for c in scored if c.rmse <= best + tie_rtol * max(best, 1.0)]
    winner = min(tied, key=lambda c: (c.order.p + c.order.q, c.order.p))
    return Selection(winner.order, winner.model, candidates)
