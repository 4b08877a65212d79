"""Control scenarios, smoothed trajectory prediction and warm-up scheduling.

Given a stage-two temperature model and forecast ambient conditions, control
columns are overwritten with planned values and the predicted indoor
temperature is smoothed with a trailing moving average. Warm-up time is the
gap between switching the controls on (``t0``) and the first sustained hit of
the target (``t1``); the switch-on time is scheduled back from the target
instant either by a static shift or by bisection on ``t0``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .frame import ENGINEERED, TIME_FORMAT, calendar_frame, infer_kind
from .gbm import TreeEnsemble
from .sensors import SensorIdError, parse_sensor_id

logger = logging.getLogger(__name__)

MINUTE = pd.Timedelta(minutes=1)


class ControlError(ValueError):
    pass


class TargetUnreachable(ControlError):
    pass


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean over ``min(window, i + 1)`` points; same length as input.

    Each output is clipped to the min/max of its own window so that constant
    stretches stay exactly constant.
    """
    if window < 1:
        raise ControlError("window must be at least 1")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ControlError("cannot smooth an empty series")
    if window == 1:
        return x.copy()
    padded = np.concatenate([np.full(window - 1, np.nan), x])
    win = sliding_window_view(padded, window)
    mean = np.nanmean(win, axis=1)
    return np.clip(mean, np.nanmin(win, axis=1), np.nanmax(win, axis=1))


@dataclass(frozen=True)
class Step:
    """``before`` up to the switch time, ``after`` from it onwards."""

    before: float
    after: float


@dataclass(frozen=True)
class ControlScenario:
    assignments: Mapping[str, float | Step]
    switch_time: pd.Timestamp | None = None

    def __post_init__(self):
        has_step = any(isinstance(v, Step) for v in self.assignments.values())
        if has_step and self.switch_time is None:
            raise ControlError("step plans need a switch time")

    def values(self, index: pd.DatetimeIndex) -> pd.DataFrame:
        """Planned control values on ``index``."""
        out = pd.DataFrame(index=index)
        if self.switch_time is not None:
            after = index >= pd.Timestamp(self.switch_time)
        for col, v in self.assignments.items():
            if isinstance(v, Step):
                out[col] = np.where(after, float(v.after), float(v.before))
            else:
                out[col] = float(v)
        return out

    @classmethod
    def from_mapping(cls, data: Mapping[str, object], switch_time=None) -> "ControlScenario":
        """``{"col": 1.0}`` constants or ``{"col": [before, after]}`` steps."""
        assignments = {}
        for col, v in data.items():
            if isinstance(v, (list, tuple)):
                if len(v) != 2:
                    raise ControlError(f"step plan for {col!r} needs [before, after]")
                assignments[col] = Step(float(v[0]), float(v[1]))
            else:
                assignments[col] = float(v)
        st = None if switch_time is None else pd.Timestamp(switch_time)
        return cls(assignments, st)


def assemble_features(feature_names: Sequence[str], ambient_future: pd.DataFrame,
                      scenario: ControlScenario) -> pd.DataFrame:
    """Future feature matrix: calendar columns, scenario controls, forecasts otherwise."""
    index = ambient_future.index
    if scenario.switch_time is not None and not index[0] <= scenario.switch_time <= index[-1]:
        raise ControlError(f"switch time {scenario.switch_time} outside the forecast horizon")
    controls = scenario.values(index)
    calendar = calendar_frame(index)
    cols = {}
    for name in feature_names:
        if name in controls.columns:
            cols[name] = controls[name].to_numpy()
        elif name in ENGINEERED:
            cols[name] = calendar[name].to_numpy()
        elif name in ambient_future.columns:
            cols[name] = ambient_future[name].to_numpy(dtype=float)
        else:
            raise ControlError(f"feature {name!r} is neither forecast nor controlled")
    return pd.DataFrame(cols, index=index)


def predict_future(ensemble: TreeEnsemble, ambient_future: pd.DataFrame, scenario: ControlScenario,
                   standardizer=None) -> pd.Series:
    """Raw (unsmoothed) predicted response over the forecast horizon."""
    rows = assemble_features(ensemble.feature_names, ambient_future, scenario)
    if standardizer is not None:
        rows = standardizer.transform(rows)
    return pd.Series(ensemble.predict(rows), index=ambient_future.index, name="prediction")


@dataclass(frozen=True)
class ExperimentCase:
    name: str
    with_control: ControlScenario
    no_control: ControlScenario


@dataclass
class ExperimentResult:
    case: ExperimentCase
    trajectories: pd.DataFrame
    mean_lift: float


def load_cases(path: str | Path, switch_time=None) -> list[ExperimentCase]:
    """Read experiment pairs from JSON.

    The file holds ``switch_time`` and a list of ``cases`` with ``name``,
    ``with_control`` and ``no_control`` mappings; ``switch_time`` given here
    wins over the file's.
    """
    data = json.loads(Path(path).read_text())
    st = switch_time if switch_time is not None else data.get("switch_time")
    cases = []
    for c in data["cases"]:
        cst = c.get("switch_time", st) if switch_time is None else switch_time
        cases.append(ExperimentCase(
            str(c["name"]),
            ControlScenario.from_mapping(c["with_control"], cst),
            ControlScenario.from_mapping(c["no_control"], cst),
        ))
    return cases


def run_control_experiments(ensemble: TreeEnsemble, ambient_future: pd.DataFrame,
                            cases: Sequence[ExperimentCase], standardizer=None,
                            window: int = 20) -> list[ExperimentResult]:
    """Smoothed with/without-control trajectories and their post-switch mean lift."""
    results = []
    for case in cases:
        with_c = moving_average(predict_future(ensemble, ambient_future, case.with_control,
                                               standardizer), window)
        no_c = moving_average(predict_future(ensemble, ambient_future, case.no_control,
                                             standardizer), window)
        traj = pd.DataFrame({"with_control": with_c, "no_control": no_c},
                            index=ambient_future.index)
        traj["difference"] = traj["with_control"] - traj["no_control"]
        st = case.with_control.switch_time
        post = traj.index >= st if st is not None else np.ones(len(traj), dtype=bool)
        results.append(ExperimentResult(case, traj, float(traj["difference"][post].mean())))
    return results


def find_sustained_hit(trajectory, start: int, target: float, hold: int) -> int | None:
    """Earliest index ``i >= start`` with ``trajectory[i:i + hold + 1] >= target``.

    The value at ``i`` and the ``hold`` values after it must all reach the
    target; windows running past the end of the trajectory do not count.
    """
    if hold < 1:
        raise ControlError("hold must be at least one minute")
    x = np.asarray(trajectory, dtype=float)
    n = len(x)
    if start < 0 or n - start < hold + 1:
        return None
    above = (x[start:] >= target).astype(np.int64)
    # length of the run of values >= target beginning at each position
    run = np.zeros(len(above) + 1, dtype=np.int64)
    for i in range(len(above) - 1, -1, -1):
        run[i] = run[i + 1] + 1 if above[i] else 0
    ok = np.flatnonzero(run[:-1] >= hold + 1)
    return int(start + ok[0]) if ok.size else None


@dataclass(frozen=True)
class HeatingEvent:
    event: str
    target_zone: str
    target_time: pd.Timestamp
    target_temperature: float
    controls: tuple[str, ...]
    settings: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.target_temperature):
            raise ControlError("target temperature must be finite")
        if not self.controls:
            raise ControlError("an event needs at least one control")

    def desired(self, column: str) -> float:
        """Value a control takes once switched on (booleans default to on)."""
        if column in self.settings:
            return float(self.settings[column])
        if infer_kind(column) == "boolean":
            return 1.0
        raise ControlError(f"control {column!r} needs a desired value, e.g. {column}=23")


_EVENT_KEYS = {
    "event": "event",
    "targetzone": "target_zone",
    "targettimestamp": "target_time",
    "targettemperature": "target_temperature",
    "controls": "controls",
}


def parse_event(text: str) -> HeatingEvent:
    """Parse ``Key: value`` lines (``Event``, ``TargetZone``, ``TargetTimestamp``,
    ``TargetTemperature``, ``Controls``).

    Controls are comma separated sensor ids, each optionally ``=value``.
    """
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ControlError(f"event line {lineno}: expected 'Key: value'")
        norm = key.replace(" ", "").replace("_", "").lower()
        if norm not in _EVENT_KEYS:
            raise ControlError(f"event line {lineno}: unknown key {key.strip()!r}")
        fields[_EVENT_KEYS[norm]] = value.strip()
    missing = [k for k in ("target_time", "target_temperature", "controls") if k not in fields]
    if missing:
        raise ControlError(f"event is missing {missing}")
    temp = fields["target_temperature"].replace("°C", "").replace("C", "").strip()
    controls, settings = [], {}
    for item in fields["controls"].split(","):
        item = item.strip()
        if not item:
            continue
        name, eq, value = item.partition("=")
        name = name.strip()
        try:
            parse_sensor_id(name)
        except SensorIdError as exc:
            raise ControlError(f"bad control {name!r}: {exc}") from exc
        controls.append(name)
        if eq:
            settings[name] = float(value.strip().replace("°C", ""))
    try:
        when = pd.Timestamp(fields["target_time"])
        temperature = float(temp)
    except ValueError as exc:
        raise ControlError(f"bad event value: {exc}") from exc
    return HeatingEvent(fields.get("event", "Heating"), fields.get("target_zone", ""),
                        when, temperature, tuple(controls), settings)


def load_event(path: str | Path) -> HeatingEvent:
    return parse_event(Path(path).read_text())


@dataclass
class ControlPlan:
    mode: str
    now: pd.Timestamp
    target_time: pd.Timestamp
    target_temperature: float
    t0: pd.Timestamp
    t1: pd.Timestamp | None
    delta_t: pd.Timedelta | None
    switch_on_time: pd.Timestamp
    buffer: pd.Timedelta
    trajectory: pd.Series
    iterations: int = 0

    @property
    def delta_t_minutes(self) -> float | None:
        return None if self.delta_t is None else self.delta_t / MINUTE

    def to_text(self) -> str:
        def ts(v):
            return "" if v is None else v.strftime(TIME_FORMAT)

        pairs = [
            ("mode", self.mode),
            ("now", ts(self.now)),
            ("target_time", ts(self.target_time)),
            ("target_temperature", f"{self.target_temperature:g}"),
            ("t0", ts(self.t0)),
            ("t1", ts(self.t1)),
            ("delta_t_minutes", "" if self.delta_t is None else f"{self.delta_t_minutes:g}"),
            ("switch_on_time", ts(self.switch_on_time)),
            ("buffer_minutes", f"{self.buffer / MINUTE:g}"),
            ("iterations", str(self.iterations)),
        ]
        return "".join(f"{k} = {v}\n" for k, v in pairs)


def _minutes(td: pd.Timedelta) -> int:
    return int(td // MINUTE)


def plan_heating(event: HeatingEvent, now, model, mode: str = "static", hold: int = 20,
                 buffer: int = 5, t0=None, window: int = 20,
                 before: Mapping[str, float] | None = None, lookahead: int = 60) -> ControlPlan:
    """Schedule the switch-on time that reaches the event's target by its timestamp.

    ``model`` is a fitted two-stage model (see :class:`heatcast.pipeline.TwoStageModel`).
    Ambient conditions are forecast from the end of its history to
    ``t + lookahead + hold`` so that hits later than ``t`` are still found;
    controls hold their ``before`` values (booleans off, numeric signals at
    their last observed value unless given) until ``t0`` and their desired
    values afterwards.
    """
    if mode not in ("static", "iterative"):
        raise ControlError(f"unknown planning mode {mode!r}")
    now = pd.Timestamp(now).floor("min")
    t = pd.Timestamp(event.target_time).floor("min")
    if not now < t:
        raise ControlError(f"target time {t} is not after now ({now})")
    history_end = model.history_end
    if not now > history_end:
        raise ControlError(f"now ({now}) must be after the end of history ({history_end})")
    start = now if t0 is None else pd.Timestamp(t0).floor("min")
    if not now <= start < t:
        raise ControlError("t0 must lie between now and the target time")
    missing = [c for c in event.controls if c not in model.controls]
    if missing:
        raise ControlError(f"event controls {missing} are not model controls")

    if lookahead < 0:
        raise ControlError("lookahead must be non-negative")
    horizon = _minutes(t + (lookahead + hold) * MINUTE - history_end)
    ambient = model.forecast_ambient(horizon).frame
    index = ambient.index
    pre = dict(model.default_before(model.controls))
    pre.update(before or {})
    after = {c: event.desired(c) for c in event.controls}
    # model controls the event leaves alone stay at their pre-switch value
    after.update({c: pre[c] for c in model.controls if c not in after})

    def trajectory(switch: pd.Timestamp) -> pd.Series:
        scen = ControlScenario({c: Step(pre[c], after[c]) for c in model.controls}, switch)
        raw = model.predict(ambient, scen)
        return pd.Series(moving_average(raw.to_numpy(), window), index=index, name="smoothed")

    def hit(switch: pd.Timestamp):
        traj = trajectory(switch)
        i = find_sustained_hit(traj.to_numpy(), index.get_loc(switch), event.target_temperature, hold)
        return (None if i is None else index[i]), traj

    gap = t - now
    t1, traj = hit(start)
    if t1 is None:
        raise TargetUnreachable(
            f"predicted temperature never holds {event.target_temperature:g} for {hold} min "
            f"with controls on from {start}")
    dt = t1 - start
    buf = pd.Timedelta(minutes=buffer)
    if dt >= gap:
        return ControlPlan(mode, now, t, event.target_temperature, start, t1, dt, now,
                           pd.Timedelta(0), traj)
    if mode == "static":
        buf = min(buf, gap - dt)
        return ControlPlan(mode, now, t, event.target_temperature, start, t1, dt,
                           t - dt - buf, buf, traj)

    lo, lo_hit, lo_traj = start, t1, traj
    hi = t
    iterations = 0
    while hi - lo > MINUTE and iterations < 20:
        mid = lo + ((hi - lo) // MINUTE // 2) * MINUTE
        h, tr = hit(mid)
        iterations += 1
        if h is not None and h <= t:
            lo, lo_hit, lo_traj = mid, h, tr
            if t - h <= MINUTE:
                break
        else:
            hi = mid
    buf = min(buf, lo - now)
    return ControlPlan(mode, now, t, event.target_temperature, lo, lo_hit, lo_hit - lo,
                       lo - buf, buf, lo_traj, iterations)
