"""Shared vocabulary: measurement records, geo points, CAQI math, distances.

Everything here is an immutable value object; instances are safe to share
between threads without coordination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Mapping

EARTH_RADIUS_KM = 6371.0


class Parameter(Enum):
    """The closed set of series the system stores and publishes."""

    PM1 = "pm1"
    PM25 = "pm25"
    PM10 = "pm10"
    TEMPERATURE = "temperature"
    PRESSURE = "pressure"
    HUMIDITY = "humidity"
    AQI = "aqi"


#: Accepted physical range per parameter (inclusive bounds).
PHYSICAL_RANGES: dict[Parameter, tuple[float, float]] = {
    Parameter.PM1: (0.0, math.inf),
    Parameter.PM25: (0.0, math.inf),
    Parameter.PM10: (0.0, math.inf),
    Parameter.TEMPERATURE: (-90.0, 60.0),
    Parameter.PRESSURE: (800.0, 1100.0),
    Parameter.HUMIDITY: (0.0, 100.0),
    Parameter.AQI: (0.0, math.inf),
}

#: Parameters that arrive from sensors (everything except the derived index).
MEASURED_PARAMETERS = (
    Parameter.PM1,
    Parameter.PM25,
    Parameter.PM10,
    Parameter.TEMPERATURE,
    Parameter.PRESSURE,
    Parameter.HUMIDITY,
)


class MeasurementError(ValueError):
    """Base class for measurement validation failures."""


class MissingTimestamp(MeasurementError):
    pass


class AllFieldsAbsent(MeasurementError):
    pass


class OutOfPhysicalRange(MeasurementError):
    def __init__(self, parameter: Parameter, value: object):
        self.parameter = parameter
        self.value = value
        super().__init__(f"{parameter.value}={value!r} outside physical range")


class NegativeConcentration(ValueError):
    pass


def rfc3339_parse(text: str) -> datetime:
    """Parse an RFC3339 timestamp into an aware UTC datetime."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    stamp = datetime.fromisoformat(raw)
    if stamp.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no timezone")
    return stamp.astimezone(timezone.utc)


def rfc3339_format(stamp: datetime) -> str:
    """Format an aware datetime as a compact RFC3339 UTC string."""
    if stamp.tzinfo is None:
        raise ValueError("naive datetime")
    utc = stamp.astimezone(timezone.utc).replace(tzinfo=None)
    return utc.isoformat() + "Z"


def floor_to_hour(stamp: datetime) -> datetime:
    """Truncate a datetime to the start of its UTC hour."""
    return stamp.astimezone(timezone.utc).replace(minute=0, second=0, microsecond=0)


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 coordinate pair in degrees."""

    latitude: float
    longitude: float

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0):
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not (-180.0 <= self.longitude <= 180.0):
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class Installation:
    """One station of the public sensor network."""

    id: int
    point: GeoPoint
    provider_name: str
    elevation_m: float | None = None


@dataclass(frozen=True)
class CaqiBreakpointTable:
    """Piecewise-linear index segments per pollutant.

    Each segment is (concentration_lo, concentration_hi, index_lo, index_hi);
    segments must be contiguous, strictly increasing and anchored at (0, 0).
    """

    pm25: tuple[tuple[float, float, float, float], ...]
    pm10: tuple[tuple[float, float, float, float], ...]

    def __post_init__(self):
        for name, segments in (("pm25", self.pm25), ("pm10", self.pm10)):
            if not segments:
                raise ValueError(f"{name}: empty breakpoint table")
            if segments[0][0] != 0.0 or segments[0][2] != 0.0:
                raise ValueError(f"{name}: first segment must start at (0, 0)")
            for prev, cur in zip(segments, segments[1:]):
                if cur[0] != prev[1] or cur[2] != prev[3]:
                    raise ValueError(f"{name}: segments not contiguous at {cur}")
            for c_lo, c_hi, i_lo, i_hi in segments:
                if not (c_lo < c_hi and i_lo < i_hi):
                    raise ValueError(f"{name}: non-increasing segment {(c_lo, c_hi, i_lo, i_hi)}")


#: CAQI breakpoints as reported by the airly network; configurable per deployment.
DEFAULT_CAQI_TABLE = CaqiBreakpointTable(
    pm25=((0.0, 15.0, 0.0, 25.0), (15.0, 30.0, 25.0, 50.0), (30.0, 55.0, 50.0, 75.0), (55.0, 110.0, 75.0, 100.0)),
    pm10=((0.0, 25.0, 0.0, 25.0), (25.0, 50.0, 25.0, 50.0), (50.0, 90.0, 50.0, 75.0), (90.0, 180.0, 75.0, 100.0)),
)


def _sub_index(value: float, segments: tuple[tuple[float, float, float, float], ...]) -> float:
    if value < 0:
        raise NegativeConcentration(f"concentration {value} < 0")
    for c_lo, c_hi, i_lo, i_hi in segments:
        if value <= c_hi:
            return i_lo + (value - c_lo) * (i_hi - i_lo) / (c_hi - c_lo)
    # Above scale: keep extending the last segment so extremes stay ordered.
    c_lo, c_hi, i_lo, i_hi = segments[-1]
    return i_hi + (value - c_hi) * (i_hi - i_lo) / (c_hi - c_lo)


def compute_caqi(
    pm25: float | None = None,
    pm10: float | None = None,
    table: CaqiBreakpointTable = DEFAULT_CAQI_TABLE,
) -> float | None:
    """Overall CAQI: the max of the per-pollutant piecewise-linear sub-indices.

    Returns None when both inputs are absent.
    """
    subs = []
    if pm25 is not None:
        subs.append(_sub_index(pm25, table.pm25))
    if pm10 is not None:
        subs.append(_sub_index(pm10, table.pm10))
    return max(subs) if subs else None


@dataclass(frozen=True)
class Measurement:
    """One timestamped sensor sample; `aqi` is always recomputed, never trusted."""

    timestamp: datetime
    pm1: float | None = None
    pm25: float | None = None
    pm10: float | None = None
    temperature: float | None = None
    pressure: float | None = None
    humidity: float | None = None
    aqi: float | None = field(init=False, default=None)

    def __post_init__(self):
        if self.timestamp.tzinfo is None:
            raise MissingTimestamp("timestamp must be timezone-aware")
        object.__setattr__(self, "timestamp", self.timestamp.astimezone(timezone.utc))
        present = False
        for parameter in MEASURED_PARAMETERS:
            value = getattr(self, parameter.value)
            if value is None:
                continue
            present = True
            lo, hi = PHYSICAL_RANGES[parameter]
            if not (isinstance(value, (int, float)) and math.isfinite(value) and lo <= value <= hi):
                raise OutOfPhysicalRange(parameter, value)
        if not present:
            raise AllFieldsAbsent("measurement carries no parameter values")
        object.__setattr__(self, "aqi", compute_caqi(self.pm25, self.pm10))

    def value(self, parameter: Parameter) -> float | None:
        return getattr(self, parameter.value)

    def present_parameters(self) -> list[Parameter]:
        """Parameters carried by this record, derived index included."""
        return [p for p in Parameter if getattr(self, p.value) is not None]


def validate_measurement(raw: Mapping[str, object]) -> Measurement:
    """Build a Measurement from an untrusted field map.

    The map carries "ts" (RFC3339 string or datetime) plus parameter values
    keyed by their lowercase names. Any supplied "aqi" is ignored.
    """
    stamp = raw.get("ts", raw.get("timestamp"))
    if stamp is None:
        raise MissingTimestamp("no 'ts' field")
    if isinstance(stamp, str):
        try:
            stamp = rfc3339_parse(stamp)
        except ValueError as exc:
            raise MissingTimestamp(str(exc)) from exc
    if not isinstance(stamp, datetime):
        raise MissingTimestamp(f"unparseable timestamp {stamp!r}")

    values: dict[str, float] = {}
    for parameter in MEASURED_PARAMETERS:
        value = raw.get(parameter.value)
        if value is None:
            continue
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise OutOfPhysicalRange(parameter, value)
        values[parameter.value] = float(value)
    return Measurement(timestamp=stamp, **values)


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, mean Earth radius 6371 km."""
    lat1, lon1 = math.radians(a.latitude), math.radians(a.longitude)
    lat2, lon2 = math.radians(b.latitude), math.radians(b.longitude)
    sin_dlat = math.sin((lat2 - lat1) / 2.0)
    sin_dlon = math.sin((lon2 - lon1) / 2.0)
    h = sin_dlat * sin_dlat + math.cos(lat1) * math.cos(lat2) * sin_dlon * sin_dlon
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


__all__ = [
    "EARTH_RADIUS_KM",
    "Parameter",
    "PHYSICAL_RANGES",
    "MEASURED_PARAMETERS",
    "MeasurementError",
    "MissingTimestamp",
    "AllFieldsAbsent",
    "OutOfPhysicalRange",
    "NegativeConcentration",
    "GeoPoint",
    "Installation",
    "CaqiBreakpointTable",
    "DEFAULT_CAQI_TABLE",
    "Measurement",
    "compute_caqi",
    "validate_measurement",
    "haversine_km",
    "rfc3339_parse",
    "rfc3339_format",
    "floor_to_hour",
]
