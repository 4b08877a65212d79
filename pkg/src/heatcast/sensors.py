"""Sensor identifiers of the form ``<space>-<zone>-<CODE><index>``.

The first number is the type of space (0 outside, 1 house), the second the
zone area, then the functional code and the sensor number, e.g. ``1-15-TMP1``.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass


class Space(enum.IntEnum):
    OUTSIDE = 0
    HOUSE = 1


class SensorCode(str, enum.Enum):
    TMP = "TMP"
    AMB = "AMB"
    LTC = "LTC"
    FAN = "FAN"
    HTC = "HTC"
    HTV = "HTV"
    PIR = "PIR"
    EPIR = "EPIR"
    OPC = "OPC"
    RAIN = "RAIN"
    HYGR = "HYGR"

    @property
    def is_numeric(self) -> bool:
        return self in (SensorCode.TMP, SensorCode.HYGR)


class SensorIdError(ValueError):
    """Raised for identifiers that do not follow the naming convention."""


_PATTERN = re.compile(r"^(?P<space>\d+)-(?P<zone>\d+)-(?P<code>[A-Z]+)(?P<index>\d+)$")


@dataclass(frozen=True, order=True)
class SensorId:
    space: Space
    zone: int
    code: SensorCode
    index: int

    def __str__(self) -> str:
        return f"{int(self.space)}-{self.zone}-{self.code.value}{self.index}"

    @property
    def kind(self) -> str:
        """``"numeric"`` for temperature/humidity, ``"boolean"`` otherwise."""
        return "numeric" if self.code.is_numeric else "boolean"


def parse_sensor_id(text: str) -> SensorId:
    """Parse ``text`` into a :class:`SensorId`.

    Raises
    ------
    SensorIdError
        If the pattern is malformed, the code is unknown or the space digit is
        not 0 or 1. The message names the offending token.
    """
    if not text:
        raise SensorIdError("empty sensor id")
    m = _PATTERN.match(text.strip())
    if m is None:
        raise SensorIdError(f"malformed sensor id {text!r}")
    space = int(m["space"])
    if space not in (0, 1):
        raise SensorIdError(f"space digit {m['space']!r} in {text!r} is not 0 or 1")
    try:
        code = SensorCode(m["code"])
    except ValueError:
        raise SensorIdError(f"unknown sensor code {m['code']!r} in {text!r}") from None
    index = int(m["index"])
    if index < 1:
        raise SensorIdError(f"sensor index {m['index']!r} in {text!r} must be positive")
    return SensorId(Space(space), int(m["zone"]), code, index)


def is_sensor_id(text: str) -> bool:
    try:
        parse_sensor_id(text)
    except SensorIdError:
        return False
    return True
