"""Univariate autoregression with PACF-threshold lag selection.

Each ambient signal is modelled as

    X_t = mu + sum_k alpha_k X_{t-k} + eps_t

over a (possibly non-contiguous) lag subset chosen where the sample partial
autocorrelation exceeds an absolute threshold. Multi-step forecasts are
rolled forward one step at a time, feeding each prediction back in.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .frame import calendar_frame, column_kinds, with_kinds, ENGINEERED

logger = logging.getLogger(__name__)


class ARError(ValueError):
    pass


class ConstantSeriesError(ARError):
    pass


@dataclass(frozen=True)
class LagSelectionConfig:
    pacf_threshold: float = 0.1
    max_lag: int = 40

    def __post_init__(self):
        if not 0 < self.pacf_threshold < 1:
            raise ARError("pacf_threshold must lie in (0, 1)")
        if self.max_lag < 1:
            raise ARError("max_lag must be positive")


@dataclass(frozen=True)
class ARModel:
    mu: float
    lags: tuple[int, ...]
    alphas: tuple[float, ...]
    sigma2: float
    n_train: int

    @property
    def order(self) -> int:
        return max(self.lags)

    def companion_radius(self) -> float:
        """Spectral radius of the companion matrix of the full-lag polynomial."""
        p = self.order
        coef = np.zeros(p)
        for k, a in zip(self.lags, self.alphas):
            coef[k - 1] = a
        comp = np.zeros((p, p))
        comp[0] = coef
        comp[1:, :-1] = np.eye(p - 1)
        return float(np.max(np.abs(np.linalg.eigvals(comp))))


def _as_series(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ARError("series must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise ARError("series contains non-finite values")
    return x


def acf(series, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelations ``r_0..r_max_lag`` (``r_0 == 1``)."""
    x = _as_series(series)
    if len(x) <= max_lag:
        raise ARError(f"series length {len(x)} must exceed max_lag {max_lag}")
    d = x - x.mean()
    denom = np.dot(d, d)
    if denom <= 0 or np.ptp(x) == 0:
        raise ConstantSeriesError("constant series has no autocorrelation")
    n = len(d)
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = np.dot(d[k:], d[: n - k]) / denom
    return out


def pacf(series, max_lag: int) -> np.ndarray:
    """Partial autocorrelations by Durbin-Levinson on the sample ACF.

    Index 0 holds 1.0 so that ``pacf(x, m)[k]`` is the lag-``k`` value.
    """
    r = acf(series, max_lag)
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    phi = np.zeros(max_lag + 1)
    out[1] = phi[1] = r[1]
    for k in range(2, max_lag + 1):
        prev = phi[1:k].copy()
        denom = 1.0 - np.dot(prev, r[1:k])
        if denom <= 1e-12:
            raise ARError(f"Durbin-Levinson recursion broke down at lag {k}")
        kk = (r[k] - np.dot(prev, r[k - 1:0:-1])) / denom
        phi[1:k] = prev - kk * prev[::-1]
        phi[k] = kk
        out[k] = kk
    return out


def select_lags(series, config: LagSelectionConfig = LagSelectionConfig()) -> list[int]:
    """Lags whose |PACF| reaches the threshold; ``[1]`` when none does."""
    values = pacf(series, config.max_lag)
    lags = [k for k in range(1, config.max_lag + 1) if abs(values[k]) >= config.pacf_threshold]
    return lags or [1]


def fit_ar(series, lags: Sequence[int]) -> ARModel:
    """Least-squares fit of ``X_t`` on an intercept and the given lags."""
    x = _as_series(series)
    lags = tuple(sorted(set(int(k) for k in lags)))
    if not lags or lags[0] < 1:
        raise ARError("lags must be positive integers")
    p = lags[-1]
    if len(x) <= p + 10:
        raise ARError(f"series length {len(x)} too short for lag {p}")
    if np.ptp(x) == 0:
        raise ConstantSeriesError("constant series")
    n = len(x)
    design = np.column_stack([np.ones(n - p)] + [x[p - k: n - k] for k in lags])
    target = x[p:]
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        raise ARError("singular normal equations")
    resid = target - design @ coef
    return ARModel(
        mu=float(coef[0]),
        lags=lags,
        alphas=tuple(float(a) for a in coef[1:]),
        sigma2=float(np.mean(resid ** 2)),
        n_train=n,
    )


def _step(model: ARModel, buf: list[float]) -> float:
    value = model.mu
    for k, a in zip(model.lags, model.alphas):
        value += a * buf[-k]
    return value


def rolling_forecast(model: ARModel, history, horizon: int, refit: bool = False) -> np.ndarray:
    """``horizon`` one-step predictions, each appended to the history.

    With ``refit`` the coefficients are re-estimated on the augmented history
    before every step; otherwise the fitted model is reused throughout.
    """
    if horizon < 1:
        raise ARError("horizon must be at least 1")
    buf = list(_as_series(history))
    if len(buf) < model.order:
        raise ARError(f"history of {len(buf)} points is shorter than lag {model.order}")
    out = np.empty(horizon)
    for i in range(horizon):
        if refit and i:
            model = fit_ar(buf, model.lags)
        out[i] = _step(model, buf)
        buf.append(out[i])
    return out


class ARForecaster(BaseEstimator):
    """Estimator wrapper: ``fit`` selects lags and fits, ``predict`` rolls forward."""

    def __init__(self, pacf_threshold: float = 0.1, max_lag: int = 40, lags=None, refit: bool = False):
        self.pacf_threshold = pacf_threshold
        self.max_lag = max_lag
        self.lags = lags
        self.refit = refit

    def fit(self, y, X=None):
        y = _as_series(y)
        if self.lags is None:
            max_lag = min(self.max_lag, max(1, len(y) // 2 - 1))
            lags = select_lags(y, LagSelectionConfig(self.pacf_threshold, max_lag))
        else:
            lags = self.lags
        self.model_ = fit_ar(y, lags)
        self.history_ = y
        return self

    def predict(self, horizon: int, history=None) -> np.ndarray:
        check_is_fitted(self)
        hist = self.history_ if history is None else history
        return rolling_forecast(self.model_, hist, horizon, refit=self.refit)


@dataclass
class AmbientForecast:
    """Future frame plus the per-column models that produced it."""

    frame: pd.DataFrame
    models: dict[str, ARModel] = field(default_factory=dict)
    constants: dict[str, float] = field(default_factory=dict)

    def diagnostics(self) -> str:
        """Flat ``key = value`` text, one block per forecast column."""
        lines = []
        for col in self.frame.columns:
            if col in self.models:
                m = self.models[col]
                lines += [
                    f"[{col}]",
                    f"lags = {','.join(str(k) for k in m.lags)}",
                    f"mu = {m.mu!r}",
                    f"alphas = {','.join(repr(a) for a in m.alphas)}",
                    f"sigma2 = {m.sigma2!r}",
                    f"n_train = {m.n_train}",
                    "",
                ]
            elif col in self.constants:
                lines += [f"[{col}]", "constant = " + repr(self.constants[col]), ""]
        return "\n".join(lines)

    def write_diagnostics(self, path: str | Path) -> None:
        Path(path).write_text(self.diagnostics())


def forecast_ambient(
    train: pd.DataFrame,
    non_control: Sequence[str],
    horizon: int,
    config: LagSelectionConfig = LagSelectionConfig(),
    refit: bool = False,
) -> AmbientForecast:
    """Forecast every non-control column ``horizon`` minutes past the training end.

    Engineered calendar columns are regenerated from the future timestamps
    instead of being forecast; boolean sensors are clamped to ``[0, 1]``.
    """
    if horizon < 1:
        raise ARError("horizon must be at least 1")
    missing = [c for c in non_control if c not in train.columns]
    if missing:
        raise ARError(f"columns {missing} not in training frame")
    kinds = column_kinds(train)
    index = pd.date_range(train.index[-1] + pd.Timedelta(minutes=1), periods=horizon,
                          freq="min", name=train.index.name or "timestamp")
    calendar = calendar_frame(index)
    out = pd.DataFrame(index=index)
    models: dict[str, ARModel] = {}
    constants: dict[str, float] = {}
    max_lag = min(config.max_lag, max(1, len(train) // 2 - 1))
    cfg = LagSelectionConfig(config.pacf_threshold, max_lag)
    for col in non_control:
        if col in ENGINEERED:
            out[col] = calendar[col]
            continue
        series = train[col].to_numpy(dtype=float)
        try:
            if np.ptp(series) == 0:
                raise ConstantSeriesError(col)
            model = fit_ar(series, select_lags(series, cfg))
            values = rolling_forecast(model, series, horizon, refit=refit)
            models[col] = model
        except ConstantSeriesError:
            constants[col] = float(series[-1])
            values = np.full(horizon, series[-1])
        except ARError as exc:
            raise ARError(f"column {col!r}: {exc}") from exc
        if kinds.get(col) == "boolean":
            values = np.clip(values, 0.0, 1.0)
        out[col] = values
    kinds_out = {c: kinds.get(c, "numeric") for c in out.columns}
    return AmbientForecast(with_kinds(out, kinds_out), models, constants)

