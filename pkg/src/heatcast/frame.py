"""Sensor frames: CSV ingestion, resampling, cleaning, calendar features, splits.

A frame is a :class:`pandas.DataFrame` indexed by a naive ``DatetimeIndex``
named ``timestamp``. Column kinds (``numeric``, ``boolean`` or
``engineered``) travel in ``frame.attrs["kinds"]`` and are otherwise inferred
from the sensor naming convention.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .sensors import SensorIdError, parse_sensor_id

logger = logging.getLogger(__name__)

TIMESTAMP = "timestamp"
TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")
HOURS = "hours"
ENGINEERED = (HOURS,) + WEEKDAYS
KINDS = ("numeric", "boolean", "engineered")
MAD_SCALE = 1.4826


class FrameError(ValueError):
    pass


def infer_kind(column: str) -> str:
    if column in ENGINEERED:
        return "engineered"
    try:
        return parse_sensor_id(column).kind
    except SensorIdError:
        return "numeric"


def column_kinds(frame: pd.DataFrame) -> dict[str, str]:
    """Kinds of every column, using stored overrides where present."""
    stored = frame.attrs.get("kinds", {})
    return {c: stored.get(c, infer_kind(c)) for c in frame.columns}


def columns_of_kind(frame: pd.DataFrame, kind: str) -> list[str]:
    return [c for c, k in column_kinds(frame).items() if k == kind]


def with_kinds(frame: pd.DataFrame, kinds: Mapping[str, str] | None) -> pd.DataFrame:
    if kinds:
        frame.attrs["kinds"] = {c: k for c, k in kinds.items() if c in frame.columns}
    else:
        frame.attrs.pop("kinds", None)
    return frame


def _stored(frame: pd.DataFrame) -> dict[str, str]:
    return dict(frame.attrs.get("kinds", {}))


def validate_frame(frame: pd.DataFrame) -> None:
    if not isinstance(frame.index, pd.DatetimeIndex):
        raise FrameError("frame must be indexed by timestamps")
    if len(frame) > 1 and not frame.index.is_monotonic_increasing:
        raise FrameError("timestamps must be non-decreasing")
    for col in columns_of_kind(frame, "boolean"):
        values = frame[col].to_numpy(dtype=float)
        if np.any((values < 0) | (values > 1)):
            raise FrameError(f"boolean column {col!r} has values outside [0, 1]")


def ingest_csv(path: str | Path, schema: Mapping[str, str] | None = None) -> pd.DataFrame:
    """Read a sensor CSV whose first column is ``timestamp``.

    ``schema`` maps column names to a kind, overriding inference.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise FrameError(f"cannot read {path}: {exc}") from exc
    if not header:
        raise FrameError(f"{path} is empty")
    if header[0] != TIMESTAMP:
        raise FrameError(f"first column must be {TIMESTAMP!r}, got {header[0]!r}")
    seen = set()
    for name in header[1:]:
        if name in seen:
            raise FrameError(f"duplicate column {name!r}")
        seen.add(name)

    raw = pd.read_csv(path, dtype={TIMESTAMP: str})
    stamps = pd.to_datetime(raw[TIMESTAMP], format=TIME_FORMAT, errors="coerce")
    bad = np.flatnonzero(stamps.isna().to_numpy())
    if bad.size:
        # header is line 1
        row = int(bad[0]) + 2
        raise FrameError(f"unparseable timestamp {raw[TIMESTAMP].iloc[bad[0]]!r} at row {row}")
    frame = raw.drop(columns=TIMESTAMP).astype(float)
    frame.index = pd.DatetimeIndex(stamps, name=TIMESTAMP)
    if schema:
        unknown = set(schema) - set(frame.columns)
        if unknown:
            raise FrameError(f"schema names unknown columns {sorted(unknown)}")
        bad_kinds = {k for k in schema.values() if k not in KINDS}
        if bad_kinds:
            raise FrameError(f"unknown column kinds {sorted(bad_kinds)}")
    with_kinds(frame, dict(schema or {}))
    validate_frame(frame)
    return frame


def write_csv(frame: pd.DataFrame, path: str | Path) -> None:
    """Write ``frame`` in the same dialect :func:`ingest_csv` reads."""
    out = frame.copy()
    out.index = out.index.strftime(TIME_FORMAT)
    out.index.name = TIMESTAMP
    out.to_csv(path, float_format="%.10g", lineterminator="\n")


def resample_minutely(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean-resample onto a regular 1-minute grid; empty minutes forward-fill."""
    if frame.empty:
        raise FrameError("cannot resample an empty frame")
    if not frame.index.is_monotonic_increasing:
        raise FrameError("timestamps must be non-decreasing")
    binned = frame.groupby(frame.index.floor("min")).mean()
    grid = pd.date_range(binned.index[0], binned.index[-1], freq="min", name=TIMESTAMP)
    out = binned.reindex(grid)
    if out.iloc[0].isna().any():
        raise FrameError("first minute has no readings")
    out = out.ffill()
    return with_kinds(out, _stored(frame))


def remove_outliers(
    frame: pd.DataFrame, response: str, k: float = 6.0
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Drop rows whose ``response`` lies more than ``k`` robust std from the median.

    The robust std is ``1.4826 * MAD``. Returns the cleaned frame and a report
    of removed timestamps and values.
    """
    if response not in frame.columns:
        raise FrameError(f"response column {response!r} missing")
    if column_kinds(frame)[response] != "numeric":
        raise FrameError(f"response column {response!r} is not numeric")
    if not k > 0:
        raise FrameError("k must be positive")
    values = frame[response].to_numpy(dtype=float)
    median = np.median(values)
    scale = MAD_SCALE * np.median(np.abs(values - median))
    if scale == 0:
        logger.warning("response %s has zero MAD; no outliers removed", response)
        mask = np.zeros(len(values), dtype=bool)
    else:
        mask = np.abs(values - median) > k * scale
    report = pd.DataFrame({response: values[mask]}, index=frame.index[mask])
    cleaned = with_kinds(frame.loc[~mask].copy(), _stored(frame))
    return cleaned, report


def engineer_time_features(frame: pd.DataFrame) -> pd.DataFrame:
    """Append an hour-of-day column and seven one-hot weekday columns."""
    out = frame.copy()
    out[HOURS] = frame.index.hour.astype(float)
    weekday = frame.index.weekday
    for i, name in enumerate(WEEKDAYS):
        out[name] = (weekday == i).astype(float)
    kinds = _stored(frame)
    kinds.update({c: "engineered" for c in ENGINEERED})
    return with_kinds(out, kinds)


def calendar_frame(index: pd.DatetimeIndex) -> pd.DataFrame:
    """Engineered time columns alone, for a future index."""
    return engineer_time_features(pd.DataFrame(index=index))


def split(frame: pd.DataFrame, boundary) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Chronological split; the boundary instant belongs to the training side."""
    if frame.empty:
        raise FrameError("cannot split an empty frame")
    boundary = pd.Timestamp(boundary)
    if boundary < frame.index[0] or boundary > frame.index[-1]:
        raise FrameError(f"split boundary {boundary} outside frame span")
    left = frame.index <= boundary
    kinds = _stored(frame)
    return (with_kinds(frame.loc[left].copy(), kinds),
            with_kinds(frame.loc[~left].copy(), kinds))


def chronological_holdout(frame: pd.DataFrame, fraction: float = 0.1):
    """Split off the last ``fraction`` of rows as a validation set."""
    n_valid = max(1, int(round(len(frame) * fraction)))
    if n_valid >= len(frame):
        raise FrameError("frame too small for a validation split")
    return frame.iloc[:-n_valid], frame.iloc[-n_valid:]


class Standardizer(TransformerMixin, BaseEstimator):
    """Per-column z-scores with population standard deviation.

    Statistics come from the rows passed to :meth:`fit` only; ``transform``
    leaves columns not in ``columns_`` untouched.
    """

    def __init__(self, columns: Sequence[str] | None = None):
        self.columns = columns

    def fit(self, X: pd.DataFrame, y=None):
        cols = list(self.columns) if self.columns is not None else columns_of_kind(X, "numeric")
        missing = [c for c in cols if c not in X.columns]
        if missing:
            raise FrameError(f"columns {missing} not in frame")
        values = X[cols].to_numpy(dtype=float)
        mean = values.mean(axis=0) if len(values) else np.full(len(cols), np.nan)
        std = values.std(axis=0) if len(values) else np.zeros(len(cols))
        for c, s in zip(cols, std):
            if not s > 0:
                raise FrameError(f"column {c!r} has zero variance on training rows")
        self.columns_ = cols
        self.mean_ = mean
        self.scale_ = std
        return self

    def transform(self, X: pd.DataFrame) -> pd.DataFrame:
        check_is_fitted(self)
        out = X.copy()
        cols = [c for c in self.columns_ if c in X.columns]
        idx = [self.columns_.index(c) for c in cols]
        if cols:
            out[cols] = (X[cols].to_numpy(dtype=float) - self.mean_[idx]) / self.scale_[idx]
        return out

    def inverse_transform(self, X: pd.DataFrame) -> pd.DataFrame:
        check_is_fitted(self)
        out = X.copy()
        cols = [c for c in self.columns_ if c in X.columns]
        idx = [self.columns_.index(c) for c in cols]
        if cols:
            out[cols] = X[cols].to_numpy(dtype=float) * self.scale_[idx] + self.mean_[idx]
        return out

    def to_dict(self) -> dict:
        check_is_fitted(self)
        return {
            "columns": self.columns_,
            "mean": [float(v) for v in self.mean_],
            "std": [float(v) for v in self.scale_],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Standardizer":
        self = cls(columns=list(data["columns"]))
        self.columns_ = list(data["columns"])
        self.mean_ = np.asarray(data["mean"], dtype=float)
        self.scale_ = np.asarray(data["std"], dtype=float)
        return self

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Standardizer":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_standardizer(train: pd.DataFrame, columns: Iterable[str] | None = None) -> Standardizer:
    return Standardizer(None if columns is None else list(columns)).fit(train)
