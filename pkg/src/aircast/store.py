"""Per-installation time-series persistence with hourly aggregation.

An in-memory map guarded by one lock, with a versioned JSON Lines snapshot
for durability. Good for the single-host deployments this service targets.
"""

from __future__ import annotations

import json
import statistics
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable

from aircast.domain import Parameter, floor_to_hour, rfc3339_format, rfc3339_parse

SNAPSHOT_VERSION = 1
DEFAULT_RETENTION = timedelta(days=30)


class StoreError(Exception):
    pass


class UnalignedTimestamp(StoreError):
    pass


class InvertedRange(StoreError):
    pass


class StorageFull(StoreError):
    pass


class VersionMismatch(StoreError):
    pass


class IoError(StoreError):
    pass


@dataclass(frozen=True)
class SeriesKey:
    """Identifies one stored series; ordering is (installation_id, parameter)."""

    installation_id: int
    parameter: Parameter

    def __lt__(self, other: "SeriesKey") -> bool:
        return (self.installation_id, self.parameter.value) < (
            other.installation_id,
            other.parameter.value,
        )


@dataclass(frozen=True)
class SeriesPoint:
    """One hour-aligned value."""

    timestamp: datetime
    value: float


def hourly_aggregate(samples: Iterable[tuple[datetime, float]]) -> list[SeriesPoint]:
    """Group samples by UTC hour and average each group.

    Means use fsum-backed arithmetic, so the result is a pure function of the
    sample multiset: permuting the input cannot change the output.
    """
    groups: dict[datetime, list[float]] = {}
    for stamp, value in samples:
        groups.setdefault(floor_to_hour(stamp), []).append(value)
    return [
        SeriesPoint(hour, statistics.fmean(values))
        for hour, values in sorted(groups.items())
    ]


class TimeSeriesStore:
    """Hour-keyed series store: last-writer-wins per hour, half-open queries.

    Thread-safe: appends and queries take an internal lock, so readers always
    see a consistent point-in-time view.
    """

    def __init__(self, max_points: int = 10_000_000, retention: timedelta = DEFAULT_RETENTION):
        self._series: dict[SeriesKey, dict[datetime, float]] = {}
        self._lock = threading.RLock()
        self._max_points = max_points
        self._count = 0
        self.retention = retention

    def append(self, key: SeriesKey, point: SeriesPoint) -> None:
        stamp = point.timestamp
        if stamp.tzinfo is None:
            raise UnalignedTimestamp("timestamp must be timezone-aware")
        stamp = stamp.astimezone(timezone.utc)
        if stamp.minute or stamp.second or stamp.microsecond:
            raise UnalignedTimestamp(f"{stamp.isoformat()} is not hour-aligned")
        with self._lock:
            series = self._series.setdefault(key, {})
            if stamp not in series:
                if self._count >= self._max_points:
                    raise StorageFull(f"store capped at {self._max_points} points")
                self._count += 1
            series[stamp] = point.value

    def query_range(self, key: SeriesKey, start: datetime, end: datetime) -> list[SeriesPoint]:
        """All points with start <= timestamp < end, ascending."""
        if start > end:
            raise InvertedRange(f"{start} > {end}")
        with self._lock:
            series = self._series.get(key)
            if not series:
                return []
            hours = sorted(h for h in series if start <= h < end)
            return [SeriesPoint(h, series[h]) for h in hours]

    def latest(self, key: SeriesKey) -> SeriesPoint | None:
        with self._lock:
            series = self._series.get(key)
            if not series:
                return None
            hour = max(series)
            return SeriesPoint(hour, series[hour])

    def keys(self) -> list[SeriesKey]:
        with self._lock:
            return sorted(self._series)

    def compact(self, now: datetime) -> int:
        """Drop points older than the retention horizon; returns removed count."""
        cutoff = now - self.retention
        removed = 0
        with self._lock:
            for series in self._series.values():
                stale = [h for h in series if h < cutoff]
                for h in stale:
                    del series[h]
                removed += len(stale)
            self._count -= removed
        return removed

    def save_snapshot(self, path: str | Path) -> None:
        path = Path(path)
        try:
            with self._lock, path.open("w", encoding="utf-8") as fh:
                fh.write(json.dumps({"version": SNAPSHOT_VERSION}) + "\n")
                for key in sorted(self._series):
                    series = self._series[key]
                    for hour in sorted(series):
                        row = {
                            "installation_id": key.installation_id,
                            "parameter": key.parameter.value,
                            "ts": rfc3339_format(hour),
                            "value": series[hour],
                        }
                        fh.write(json.dumps(row) + "\n")
        except OSError as exc:
            raise IoError(str(exc)) from exc

    def load_snapshot(self, path: str | Path) -> None:
        path = Path(path)
        try:
            with path.open("r", encoding="utf-8") as fh:
                header = fh.readline()
                try:
                    meta = json.loads(header) if header.strip() else {}
                except json.JSONDecodeError as exc:
                    raise IoError(f"bad snapshot header: {exc}") from exc
                if meta.get("version") != SNAPSHOT_VERSION:
                    raise VersionMismatch(f"snapshot version {meta.get('version')!r}")
                with self._lock:
                    for line_no, line in enumerate(fh, start=2):
                        if not line.strip():
                            continue
                        try:
                            row = json.loads(line)
                            key = SeriesKey(int(row["installation_id"]), Parameter(row["parameter"]))
                            point = SeriesPoint(rfc3339_parse(row["ts"]), float(row["value"]))
                        except (KeyError, ValueError, TypeError) as exc:
                            raise IoError(f"snapshot line {line_no}: {exc}") from exc
                        self.append(key, point)
        except OSError as exc:
            raise IoError(str(exc)) from exc

    def fingerprint(self) -> tuple:
        """Hashable view of the full contents; used by tests to detect mutation."""
        with self._lock:
            return tuple(
                (key.installation_id, key.parameter.value, tuple(sorted(self._series[key].items())))
                for key in sorted(self._series)
            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeriesStore):
            return NotImplemented
        return self.fingerprint() == other.fingerprint()


__all__ = [
    "SNAPSHOT_VERSION",
    "DEFAULT_RETENTION",
    "StoreError",
    "UnalignedTimestamp",
    "InvertedRange",
    "StorageFull",
    "VersionMismatch",
    "IoError",
    "SeriesKey",
    "SeriesPoint",
    "hourly_aggregate",
    "TimeSeriesStore",
]
