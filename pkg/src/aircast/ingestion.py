"""Clients of the upstream sensor network.

Two interchangeable providers sit behind one contract: a live HTTPS adapter
for an airly-style public API, and a deterministic replay provider fed from a
JSON Lines fixture for offline runs and tests. A caching decorator bounds the
request rate against the live service.

Fixture line format (one JSON object per line):
    {"installation_id": int, "lat": float, "lon": float,
     "ts": "RFC3339 UTC", "values": {"pm1"?, "pm25"?, "pm10"?,
     "temperature"?, "pressure"?, "humidity"?}}
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Callable, Mapping, Protocol

import requests

from aircast.domain import (
    GeoPoint,
    Installation,
    Measurement,
    MeasurementError,
    haversine_km,
    rfc3339_parse,
    validate_measurement,
)

HISTORY_HOURS = 24
CACHE_COORD_DECIMALS = 4  # ~11 m; below station spacing, above float noise

API_VALUE_NAMES = {
    "PM1": "pm1",
    "PM25": "pm25",
    "PM10": "pm10",
    "TEMPERATURE": "temperature",
    "PRESSURE": "pressure",
    "HUMIDITY": "humidity",
}


class ProviderError(Exception):
    pass


class ProviderUnavailable(ProviderError):
    pass


class MalformedResponse(ProviderError):
    pass


class RateLimited(ProviderError):
    def __init__(self, retry_after_s: float):
        self.retry_after_s = retry_after_s
        super().__init__(f"rate limited, retry after {retry_after_s}s")


class NoInstallationInRange(ProviderError):
    pass


class FixtureNotFound(ProviderError):
    pass


class FixtureParseError(ProviderError):
    def __init__(self, line_number: int, detail: str):
        self.line_number = line_number
        super().__init__(f"fixture line {line_number}: {detail}")


@dataclass(frozen=True)
class RawBundle:
    """Unvalidated provider response: field maps ready for validation."""

    current: Mapping[str, object] | None
    history: tuple[Mapping[str, object], ...]
    forecast: tuple[Mapping[str, object], ...] = ()


@dataclass(frozen=True)
class MeasurementBundle:
    """Validated snapshot: latest record plus up to 24 hourly predecessors."""

    current: Measurement
    history: tuple[Measurement, ...]
    provider_forecast: tuple[Measurement, ...] = ()
    dropped_records: int = 0

    def __post_init__(self):
        stamps = [m.timestamp for m in self.history]
        for earlier, later in zip(stamps, stamps[1:]):
            if later <= earlier:
                raise ValueError("history must ascend strictly")
        for stamp in stamps:
            if stamp.minute or stamp.second or stamp.microsecond:
                raise ValueError(f"history record {stamp.isoformat()} not hour-aligned")
        if stamps and self.current.timestamp < stamps[-1]:
            raise ValueError("current must not predate the history")


class MeasurementProvider(Protocol):
    """The two requests every provider answers."""

    def installations_near(self, point: GeoPoint, max_distance_km: float) -> list[Installation]: ...

    def raw_bundle(self, installation: Installation) -> RawBundle: ...


def nearest_installation(
    provider: MeasurementProvider, point: GeoPoint, max_distance_km: float
) -> Installation:
    """Closest candidate within range; distance ties go to the lowest id."""
    if max_distance_km <= 0:
        raise ValueError("max_distance_km must be > 0")
    candidates = provider.installations_near(point, max_distance_km)
    in_range = [
        (haversine_km(point, inst.point), inst.id, inst)
        for inst in candidates
        if haversine_km(point, inst.point) <= max_distance_km
    ]
    if not in_range:
        raise NoInstallationInRange(
            f"no installation within {max_distance_km} km of "
            f"({point.latitude}, {point.longitude})"
        )
    return min(in_range, key=lambda item: (item[0], item[1]))[2]


def fetch_measurements(
    provider: MeasurementProvider, installation: Installation
) -> MeasurementBundle:
    """Fetch and validate one bundle; invalid records are dropped, not fatal."""
    raw = provider.raw_bundle(installation)
    dropped = 0
    pool: dict[datetime, Measurement] = {}
    records = list(raw.history) + ([raw.current] if raw.current is not None else [])
    for entry in records:
        try:
            m = validate_measurement(entry)
        except MeasurementError:
            dropped += 1
            continue
        pool[m.timestamp] = m  # same-timestamp reissues: last one wins
    if not pool:
        raise MalformedResponse(
            f"no valid records for installation {installation.id} ({dropped} dropped)"
        )
    ordered = [pool[stamp] for stamp in sorted(pool)]
    current = ordered[-1]
    history = tuple(
        m
        for m in ordered[:-1]
        if not (m.timestamp.minute or m.timestamp.second or m.timestamp.microsecond)
    )[-HISTORY_HOURS:]

    forecast: list[Measurement] = []
    for entry in raw.forecast:
        try:
            forecast.append(validate_measurement(entry))
        except MeasurementError:
            dropped += 1
    forecast.sort(key=lambda m: m.timestamp)
    return MeasurementBundle(current, history, tuple(forecast), dropped)


@dataclass(frozen=True)
class FixtureRecord:
    installation_id: int
    point: GeoPoint
    timestamp: datetime
    values: Mapping[str, float]

    def as_raw(self) -> dict[str, object]:
        return {"ts": self.timestamp, **self.values}


def parse_fixture_line(line: str, line_number: int) -> FixtureRecord:
    try:
        obj = json.loads(line)
        return FixtureRecord(
            installation_id=int(obj["installation_id"]),
            point=GeoPoint(float(obj["lat"]), float(obj["lon"])),
            timestamp=rfc3339_parse(obj["ts"]),
            values={k: float(v) for k, v in obj.get("values", {}).items()},
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FixtureParseError(line_number, str(exc)) from exc


class ReplayProvider:
    """Fully deterministic provider over a recorded fixture file."""

    def __init__(self, records: list[FixtureRecord]):
        self._by_installation: dict[int, list[FixtureRecord]] = {}
        self._points: dict[int, GeoPoint] = {}
        for record in records:
            self._by_installation.setdefault(record.installation_id, []).append(record)
            self._points.setdefault(record.installation_id, record.point)
        for stream in self._by_installation.values():
            stream.sort(key=lambda r: r.timestamp)

    def installations_near(self, point: GeoPoint, max_distance_km: float) -> list[Installation]:
        return [
            Installation(id=iid, point=self._points[iid], provider_name="replay")
            for iid in sorted(self._by_installation)
        ]

    def raw_bundle(self, installation: Installation) -> RawBundle:
        stream = self._by_installation.get(installation.id)
        if not stream:
            raise ProviderUnavailable(f"installation {installation.id} not in fixture")
        raws = [record.as_raw() for record in stream]
        return RawBundle(current=raws[-1], history=tuple(raws[-1 - HISTORY_HOURS : -1]))

    def last_timestamp(self) -> datetime | None:
        stamps = [s[-1].timestamp for s in self._by_installation.values() if s]
        return max(stamps) if stamps else None


def load_replay_provider(fixture_path: str | Path) -> ReplayProvider:
    path = Path(fixture_path)
    if not path.exists():
        raise FixtureNotFound(str(path))
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if line.strip():
                records.append(parse_fixture_line(line, line_number))
    return ReplayProvider(records)


class _InFlight:
    __slots__ = ("done", "value", "error")

    def __init__(self):
        self.done = threading.Event()
        self.value = None
        self.error: BaseException | None = None


@dataclass
class _Entry:
    value: object
    expires_at: float


class CachedProvider:
    """TTL cache decorator; coalesces concurrent identical requests.

    Errors are never cached: a failed fetch leaves the slot empty so the next
    caller reaches the inner provider again.
    """

    def __init__(
        self,
        inner: MeasurementProvider,
        ttl_s: float,
        clock: Callable[[], float] = time.monotonic,
    ):
        if ttl_s <= 0:
            raise ValueError("ttl must be > 0")
        self._inner = inner
        self._ttl_s = ttl_s
        self._clock = clock
        self._lock = threading.Lock()
        self._cache: dict[tuple, _Entry] = {}
        self._inflight: dict[tuple, _InFlight] = {}

    def installations_near(self, point: GeoPoint, max_distance_km: float) -> list[Installation]:
        key = (
            "near",
            round(point.latitude, CACHE_COORD_DECIMALS),
            round(point.longitude, CACHE_COORD_DECIMALS),
            max_distance_km,
        )
        return self._through(key, lambda: self._inner.installations_near(point, max_distance_km))

    def raw_bundle(self, installation: Installation) -> RawBundle:
        key = ("bundle", installation.id)
        return self._through(key, lambda: self._inner.raw_bundle(installation))

    def _through(self, key: tuple, compute: Callable[[], object]):
        while True:
            with self._lock:
                entry = self._cache.get(key)
                if entry is not None and entry.expires_at > self._clock():
                    return entry.value
                flight = self._inflight.get(key)
                if flight is None:
                    flight = _InFlight()
                    self._inflight[key] = flight
                    mine = True
                else:
                    mine = False
            if mine:
                try:
                    value = compute()
                except BaseException as exc:
                    flight.error = exc
                    raise
                else:
                    flight.value = value
                    with self._lock:
                        self._cache[key] = _Entry(value, self._clock() + self._ttl_s)
                    return value
                finally:
                    with self._lock:
                        self._inflight.pop(key, None)
                    flight.done.set()
            else:
                flight.done.wait()
                if flight.error is None:
                    return flight.value
                raise flight.error


def with_cache(
    provider: MeasurementProvider,
    ttl_s: float,
    clock: Callable[[], float] = time.monotonic,
) -> CachedProvider:
    return CachedProvider(provider, ttl_s, clock)


def parse_api_installation(obj: Mapping) -> Installation:
    try:
        location = obj["location"]
        return Installation(
            id=int(obj["id"]),
            point=GeoPoint(float(location["latitude"]), float(location["longitude"])),
            provider_name="airly",
            elevation_m=float(obj["elevation"]) if obj.get("elevation") is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"installation object: {exc}") from exc


def parse_api_record(obj: Mapping, align_to_hour: bool) -> dict[str, object]:
    """Flatten one {fromDateTime, values: [{name, value}...]} entry."""
    try:
        stamp = rfc3339_parse(obj["tillDateTime" if not align_to_hour else "fromDateTime"])
        if align_to_hour:
            stamp = stamp.replace(minute=0, second=0, microsecond=0)
        raw: dict[str, object] = {"ts": stamp}
        for item in obj.get("values", []):
            key = API_VALUE_NAMES.get(str(item.get("name", "")).upper())
            if key is not None and item.get("value") is not None:
                raw[key] = float(item["value"])
        return raw
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"measurement entry: {exc}") from exc


class LiveProvider:
    """HTTPS adapter for an airly-v2-style API; all shape knowledge lives here."""

    def __init__(
        self,
        base_url: str,
        api_key: str,
        nearest_path: str = "/v2/installations/nearest",
        measurements_path: str = "/v2/measurements/installation",
        timeout_s: float = 10.0,
        max_results: int = 5,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.nearest_path = nearest_path
        self.measurements_path = measurements_path
        self.timeout_s = timeout_s
        self.max_results = max_results
        self._session = session or requests.Session()
        self._headers = {"apikey": api_key, "Accept": "application/json"}

    def _get(self, path: str, params: Mapping[str, object]) -> object:
        try:
            response = self._session.get(
                self.base_url + path, params=params, headers=self._headers, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise ProviderUnavailable(str(exc)) from exc
        if response.status_code == 429:
            retry_after = response.headers.get("Retry-After", "60")
            try:
                raise RateLimited(float(retry_after))
            except ValueError:
                raise RateLimited(60.0) from None
        if response.status_code != 200:
            raise ProviderUnavailable(f"HTTP {response.status_code} from {path}")
        try:
            return response.json()
        except ValueError as exc:
            raise MalformedResponse(f"invalid JSON from {path}: {exc}") from exc

    def installations_near(self, point: GeoPoint, max_distance_km: float) -> list[Installation]:
        body = self._get(
            self.nearest_path,
            {
                "lat": point.latitude,
                "lng": point.longitude,
                "maxDistanceKM": max_distance_km,
                "maxResults": self.max_results,
            },
        )
        if not isinstance(body, list):
            raise MalformedResponse("nearest-installations response is not a list")
        return [parse_api_installation(item) for item in body]

    def raw_bundle(self, installation: Installation) -> RawBundle:
        body = self._get(self.measurements_path, {"installationId": installation.id})
        if not isinstance(body, Mapping):
            raise MalformedResponse("measurements response is not an object")
        current = parse_api_record(body["current"], align_to_hour=False) if body.get("current") else None
        history = tuple(
            parse_api_record(item, align_to_hour=True) for item in body.get("history", [])
        )
        forecast = tuple(
            parse_api_record(item, align_to_hour=True) for item in body.get("forecast", [])
        )
        return RawBundle(current=current, history=history, forecast=forecast)


__all__ = [
    "HISTORY_HOURS",
    "CACHE_COORD_DECIMALS",
    "ProviderError",
    "ProviderUnavailable",
    "MalformedResponse",
    "RateLimited",
    "NoInstallationInRange",
    "FixtureNotFound",
    "FixtureParseError",
    "RawBundle",
    "MeasurementBundle",
    "MeasurementProvider",
    "nearest_installation",
    "fetch_measurements",
    "FixtureRecord",
    "parse_fixture_line",
    "ReplayProvider",
    "load_replay_provider",
    "CachedProvider",
    "with_cache",
    "parse_api_installation",
    "parse_api_record",
    "LiveProvider",
]
