"""Discrete-time multi-zone thermal simulator used as a ground-truth oracle.

Each zone follows a first-order linear recurrence at one-minute steps::

    T_z(t+1) = T_z(t) + (sum_n c_zn (T_n(t) - T_z(t)) + g_z v_z(t) + q_z) / C_z + noise

where ``n`` ranges over other zones and ``"out"`` (outside air), ``v_z`` is
the zone's heating valve, ``q_z`` a constant background heat input and
``C_z >= 1`` a relative heat capacity. The update is a convex combination of
the current temperatures as long as ``sum_n c_zn / C_z <= 1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .frame import TIMESTAMP, with_kinds
from .sensors import parse_sensor_id

OUT = "out"


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class Zone:
    zone: int
    couplings: Mapping[str, float]
    valve_gain: float = 0.0
    base_heat: float = 0.0
    capacity: float = 1.0
    valve: str | None = None
    valve_mode: str = "random"
    valve_on_minutes: tuple[int, int] = (60, 240)
    valve_off_minutes: tuple[int, int] = (60, 240)
    initial: float = 20.0
    emit_valve: bool = True

    @property
    def column(self) -> str:
        return f"1-{self.zone}-TMP1"

    @property
    def valve_column(self) -> str | None:
        if self.valve is not None:
            return self.valve
        return f"1-{self.zone}-HTV1" if self.valve_gain > 0 else None


@dataclass(frozen=True)
class Outside:
    column: str = "0-1-TMP1"
    mean: float = 5.0
    amplitude: float = 3.0
    peak_hour: float = 15.0
    noise_sigma: float = 0.05
    noise_memory: float = 0.98


@dataclass(frozen=True)
class Extra:
    """A decorative signal: ``daily`` / ``telegraph`` booleans or ``humidity``."""

    column: str
    process: str
    params: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class HouseSpec:
    zones: tuple[Zone, ...]
    outside: Outside = Outside()
    extras: tuple[Extra, ...] = ()
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        ids = [z.zone for z in self.zones]
        if len(set(ids)) != len(ids):
            raise SpecError("zone ids must be unique")
        for z in self.zones:
            if z.capacity < 1:
                raise SpecError(f"zone {z.zone}: capacity must be >= 1")
            if z.valve_gain < 0:
                raise SpecError(f"zone {z.zone}: valve gain must be non-negative")
            total = 0.0
            for key, c in z.couplings.items():
                if c < 0:
                    raise SpecError(f"zone {z.zone}: negative coupling to {key}")
                if key != OUT and int(key) not in ids:
                    raise SpecError(f"zone {z.zone}: coupling to unknown zone {key}")
                if key != OUT and int(key) == z.zone:
                    raise SpecError(f"zone {z.zone}: self coupling")
                total += c
            if total / z.capacity > 1 + 1e-12:
                raise SpecError(f"zone {z.zone}: unstable update (couplings sum to "
                                f"{total / z.capacity:.3g} > 1)")
            if z.valve_mode not in ("random", "on", "off"):
                raise SpecError(f"zone {z.zone}: unknown valve mode {z.valve_mode!r}")

    def zone(self, zone: int) -> Zone:
        for z in self.zones:
            if z.zone == zone:
                return z
        raise SpecError(f"no zone {zone}")

    def to_dict(self) -> dict:
        data = asdict(self)
        for z in data["zones"]:
            z["couplings"] = {str(k): v for k, v in z["couplings"].items()}
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> "HouseSpec":
        zones = []
        for z in data["zones"]:
            z = dict(z)
            z["couplings"] = {str(k): float(v) for k, v in z.get("couplings", {}).items()}
            for key in ("valve_on_minutes", "valve_off_minutes"):
                if key in z:
                    z[key] = tuple(z[key])
            zones.append(Zone(**z))
        extras = tuple(Extra(e["column"], e["process"], dict(e.get("params", {})))
                       for e in data.get("extras", ()))
        return cls(
            zones=tuple(zones),
            outside=Outside(**data.get("outside", {})),
            extras=extras,
            noise_sigma=float(data.get("noise_sigma", 0.05)),
            seed=int(data.get("seed", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "HouseSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed house spec {path}: {exc}") from exc


def _system(spec: HouseSpec):
    """Coupling matrix K (n_zones x n_zones+1, last column outside) and 1/C."""
    ids = [z.zone for z in spec.zones]
    n = len(ids)
    K = np.zeros((n, n + 1))
    for i, z in enumerate(spec.zones):
        for key, c in z.couplings.items():
            j = n if key == OUT else ids.index(int(key))
            K[i, j] += c
    inv_cap = np.array([1.0 / z.capacity for z in spec.zones])
    return K, inv_cap


def _step(T, out_temp, valves, K, inv_cap, gains, base):
    full = np.append(T, out_temp)
    flow = K @ full - K.sum(axis=1) * T
    return T + (flow + gains * valves + base) * inv_cap


def steady_state(spec: HouseSpec, valves: Sequence[float] | None = None, outside: float | None = None,
                 clamps: Mapping[int, float] | None = None) -> np.ndarray:
    """Equilibrium zone temperatures for constant inputs.

    Zones without any coupling have no equilibrium and keep their initial value.
    """
    K, _ = _system(spec)
    n = len(spec.zones)
    v = np.zeros(n) if valves is None else np.asarray(valves, dtype=float)
    out = spec.outside.mean if outside is None else outside
    clamps = dict(clamps or {})
    gains = np.array([z.valve_gain for z in spec.zones])
    base = np.array([z.base_heat for z in spec.zones])
    A = np.zeros((n, n))
    b = np.zeros(n)
    for i, z in enumerate(spec.zones):
        if z.zone in clamps:
            A[i, i] = 1.0
            b[i] = clamps[z.zone]
        elif K[i].sum() == 0:
            A[i, i] = 1.0
            b[i] = z.initial
        else:
            A[i, :] = K[i, :n]
            A[i, i] -= K[i].sum()
            b[i] = -(K[i, n] * out + gains[i] * v[i] + base[i])
    return np.linalg.solve(A, b)


def _telegraph(rng, n, on_range, off_range, start_on=None) -> np.ndarray:
    out = np.zeros(n)
    state = bool(rng.integers(2)) if start_on is None else start_on
    i = 0
    while i < n:
        lo, hi = on_range if state else off_range
        d = int(rng.integers(lo, hi + 1))
        out[i:i + d] = float(state)
        i += d
        state = not state
    return out


def _ar_noise(rng, n, sigma, memory) -> np.ndarray:
    e = rng.normal(0.0, sigma, n)
    out = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = memory * acc + e[i]
        out[i] = acc
    return out


def _daily(rng, hour, windows, miss, false_on) -> np.ndarray:
    inside = np.zeros(len(hour), dtype=bool)
    for lo, hi in windows:
        inside |= (hour >= lo) & (hour < hi)
    u = rng.random(len(hour))
    return np.where(inside, u >= miss, u < false_on).astype(float)


def _extra(rng, extra: Extra, hour) -> np.ndarray:
    p = extra.params
    n = len(hour)
    if extra.process == "daily":
        return _daily(rng, hour, p.get("windows", [(7, 9), (18, 23)]),
                      float(p.get("miss", 0.1)), float(p.get("false_on", 0.02)))
    if extra.process == "telegraph":
        return _telegraph(rng, n, tuple(p.get("on", (10, 60))), tuple(p.get("off", (60, 600))))
    if extra.process == "humidity":
        base = float(p.get("mean", 60.0)) + float(p.get("amplitude", 5.0)) * np.sin(
            2 * np.pi * (hour - 6.0) / 24.0)
        return base + _ar_noise(rng, n, float(p.get("sigma", 0.2)), 0.99)
    raise SpecError(f"unknown extra process {extra.process!r} for {extra.column}")


def generate(spec: HouseSpec, start, end, seed: int | None = None, burn_in_minutes: int = 1440
             ) -> pd.DataFrame:
    """Simulate the house minute by minute over ``[start, end]``.

    Emits outside temperature, zone temperatures, valve states and the extra
    signals, in that order. Identical inputs give bit-identical frames.
    """
    index = pd.date_range(pd.Timestamp(start), pd.Timestamp(end), freq="min", name=TIMESTAMP)
    if len(index) < 2 * 1440:
        raise SpecError("span must cover at least two days of minutes")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    total = len(index) + burn_in_minutes
    full_index = index[0] - pd.Timedelta(minutes=burn_in_minutes) + pd.to_timedelta(
        np.arange(total), unit="min")
    hour = full_index.hour.to_numpy() + full_index.minute.to_numpy() / 60.0

    o = spec.outside
    outside = (o.mean + o.amplitude * np.cos(2 * np.pi * (hour - o.peak_hour) / 24.0)
               + _ar_noise(rng, total, o.noise_sigma, o.noise_memory))

    n = len(spec.zones)
    valves = np.zeros((total, n))
    for i, z in enumerate(spec.zones):
        if z.valve_mode == "on":
            valves[:, i] = 1.0
        elif z.valve_mode == "random" and z.valve_column is not None:
            valves[:, i] = _telegraph(rng, total, z.valve_on_minutes, z.valve_off_minutes)

    extras = {e.column: _extra(rng, e, hour) for e in spec.extras}
    noise = rng.normal(0.0, spec.noise_sigma, (total, n)) if spec.noise_sigma > 0 else np.zeros((total, n))

    K, inv_cap = _system(spec)
    gains = np.array([z.valve_gain for z in spec.zones])
    base = np.array([z.base_heat for z in spec.zones])
    temps = np.empty((total, n))
    T = steady_state(spec, valves[0], outside[0])
    for t in range(total):
        temps[t] = T
        T = _step(T, outside[t], valves[t], K, inv_cap, gains, base) + noise[t]

    keep = slice(burn_in_minutes, None)
    data = {o.column: outside[keep]}
    for i, z in enumerate(spec.zones):
        data[z.column] = temps[keep, i]
    for i, z in enumerate(spec.zones):
        if z.valve_column is not None and z.emit_valve:
            data[z.valve_column] = valves[keep, i]
    for col, values in extras.items():
        data[col] = values[keep]
    frame = pd.DataFrame(data, index=index)
    for col in frame.columns:
        parse_sensor_id(col)
    return with_kinds(frame, None)


def _scenario_values(spec: HouseSpec, scenario: Mapping[str, object]):
    """Split a scenario into before/after valve vectors and zone clamps."""
    n = len(spec.zones)
    v_before, v_after = np.zeros(n), np.zeros(n)
    c_before, c_after = {}, {}
    by_valve = {z.valve_column: i for i, z in enumerate(spec.zones) if z.valve_column}
    by_temp = {z.column: i for i, z in enumerate(spec.zones)}
    for col, value in scenario.items():
        before, after = value if isinstance(value, (tuple, list)) else (None, value)
        if col in by_valve:
            i = by_valve[col]
            v_before[i] = 0.0 if before is None else float(before)
            v_after[i] = float(after)
        elif col in by_temp:
            zid = spec.zones[by_temp[col]].zone
            if before is not None:
                c_before[zid] = float(before)
            c_after[zid] = float(after)
        else:
            raise SpecError(f"scenario column {col!r} is neither a valve nor a zone temperature")
    return v_before, v_after, c_before, c_after


def simulate_response(spec: HouseSpec, scenario: Mapping[str, object], minutes: int,
                      outside: float | None = None) -> pd.DataFrame:
    """Noise-free zone temperatures after a control switch at minute 0.

    The house starts at equilibrium under the scenario's before-values
    (valves default off, unclamped zones free); row ``m`` is the state after
    ``m`` minutes of the after-values.
    """
    K, inv_cap = _system(spec)
    out = spec.outside.mean if outside is None else outside
    gains = np.array([z.valve_gain for z in spec.zones])
    base = np.array([z.base_heat for z in spec.zones])
    v0, v1, c0, c1 = _scenario_values(spec, scenario)
    T = steady_state(spec, v0, out, c0)
    rows = np.empty((minutes + 1, len(spec.zones)))
    ids = [z.zone for z in spec.zones]
    for m in range(minutes + 1):
        for zid, value in c1.items():
            T[ids.index(zid)] = value
        rows[m] = T
        T = _step(T, out, v1, K, inv_cap, gains, base)
    return pd.DataFrame(rows, columns=[z.column for z in spec.zones])


def true_warmup(spec: HouseSpec, zone: int, scenario: Mapping[str, object], delta: float,
                max_minutes: int = 2880, outside: float | None = None) -> int | None:
    """Exact minutes until ``zone`` first rises ``delta`` above its starting level.

    ``None`` when the rise is not reached within ``max_minutes``.
    """
    col = spec.zone(zone).column
    traj = simulate_response(spec, scenario, max_minutes, outside)[col].to_numpy()
    hit = np.flatnonzero(traj - traj[0] >= delta)
    return int(hit[0]) if hit.size else None


def closed_form_valve_warmup(spec: HouseSpec, zone: int, delta: float) -> int | None:
    """Valve-only warm-up when no other zone depends on ``zone``.

    The rise after ``m`` minutes is ``A (1 - (1 - c/C)^m)`` with
    ``A = g / c`` and ``c`` the zone's total coupling.
    """
    z = spec.zone(zone)
    c = sum(z.couplings.values())
    if z.valve_gain <= 0:
        return None
    if c == 0:
        return math.ceil(delta * z.capacity / z.valve_gain)
    lift = z.valve_gain / c
    if delta >= lift:
        return None
    return math.ceil(math.log(1 - delta / lift) / math.log(1 - c / z.capacity))


HOUSE_A_START = "2019-12-26 00:00:00"
HOUSE_A_END = "2019-12-31 23:59:00"
HOUSE_A_SEED = 7
HOUSE_A_RESPONSE = "1-15-TMP1"
HOUSE_A_VALVE = "1-13-HTV1"


def house_a(noise_sigma: float = 0.05, outside_amplitude: float = 1.0) -> HouseSpec:
    """Three heated zones plus outside air.

    Zone 15 (the response) couples to zones 14 and 8 and to outside with a
    total rate of 0.05/min, so its valve (``1-13-HTV1``) lifts it by
    0.15/0.05 = 3 K with a 20-minute time constant. Zones 14 and 8 do not
    depend on zone 15; their own valves switch at random but are not
    recorded, so their temperatures vary independently of the clock.
    """
    zones = (
        Zone(15, {"14": 0.022, "8": 0.025, OUT: 0.003}, valve_gain=0.15, valve=HOUSE_A_VALVE,
             valve_on_minutes=(90, 300), valve_off_minutes=(90, 300)),
        Zone(14, {OUT: 0.02}, valve_gain=0.1, base_heat=0.38, valve="1-14-HTC1",
             valve_on_minutes=(30, 180), valve_off_minutes=(30, 180), emit_valve=False),
        Zone(8, {OUT: 0.02}, valve_gain=0.08, base_heat=0.3, valve="1-8-HTC1",
             valve_on_minutes=(30, 180), valve_off_minutes=(30, 180), emit_valve=False),
    )
    extras = (
        Extra("0-1-HYGR1", "humidity", {"mean": 80.0, "amplitude": 8.0, "sigma": 0.3}),
        Extra("0-1-RAIN2", "telegraph", {"on": (20, 120), "off": (240, 900)}),
        Extra("0-1-AMB1", "daily", {"windows": [(8, 16)], "miss": 0.0, "false_on": 0.0}),
        Extra("0-1-EPIR1", "daily", {"windows": [(7, 9), (17, 19)], "miss": 0.7, "false_on": 0.01}),
        Extra("1-8-PIR1", "daily", {"windows": [(7, 9), (17, 22)], "miss": 0.5, "false_on": 0.02}),
        Extra("1-15-PIR1", "daily", {"windows": [(6, 8), (21, 24)], "miss": 0.5, "false_on": 0.01}),
        Extra("1-15-LTC1", "daily", {"windows": [(6, 8), (20, 23)], "miss": 0.05, "false_on": 0.0}),
        Extra("1-15-OPC1", "daily", {"windows": [(0, 7), (21, 24)], "miss": 0.02, "false_on": 0.0}),
        Extra("1-14-FAN1", "telegraph", {"on": (10, 30), "off": (120, 600)}),
        Extra("1-14-HYGR1", "humidity", {"mean": 55.0, "amplitude": 4.0, "sigma": 0.2}),
    )
    return HouseSpec(
        zones=zones,
        outside=Outside(amplitude=outside_amplitude),
        extras=extras,
        noise_sigma=noise_sigma,
        seed=HOUSE_A_SEED,
    )


def house_a_metadata(spec: HouseSpec, frame: pd.DataFrame) -> dict:
    """Row/column counts and valve-only warm-up times recorded with the fixture."""
    deltas = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
    return {
        "rows": int(len(frame)),
        "columns": int(frame.shape[1]),
        "start": str(frame.index[0]),
        "end": str(frame.index[-1]),
        "seed": spec.seed,
        "response": HOUSE_A_RESPONSE,
        "valve_only_warmup_minutes": {
            str(d): true_warmup(spec, 15, {HOUSE_A_VALVE: 1.0}, d) for d in deltas
        },
    }
