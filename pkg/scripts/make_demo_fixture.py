#!/usr/bin/env python3
"""Regenerate fixtures/demo.jsonl: 48 hourly records for two stations.

Pure trigonometric generators keep the file reproducible without an RNG.
Station 3 runs polluted (its latest pm25 sits above the default 15 ug/m3
safe level, so a replay emits exactly one alert); station 9 stays clean.
"""

import json
import math
from datetime import datetime, timedelta, timezone
from pathlib import Path

START = datetime(2021, 3, 1, 0, 0, tzinfo=timezone.utc)
HOURS = 48

STATIONS = {
    3: {"lat": 52.2297, "lon": 21.0122, "pm25_base": 28.0, "pm25_amp": 10.0},
    9: {"lat": 52.2500, "lon": 21.1000, "pm25_base": 10.5, "pm25_amp": 3.0},
}


def values_for(station: dict, hour: int) -> dict:
    day = 2 * math.pi / 24.0
    pm25 = station["pm25_base"] + station["pm25_amp"] * math.sin(day * (hour - 8)) + 1.5 * math.sin(hour / 3.1)
    return {
        "pm1": round(0.55 * pm25, 2),
        "pm25": round(pm25, 2),
        "pm10": round(1.7 * pm25 + 2.0 * math.sin(hour / 5.7), 2),
        "temperature": round(6.0 + 5.0 * math.sin(day * (hour - 14)), 2),
        "pressure": round(1013.0 + 3.0 * math.sin(hour / 9.3), 2),
        "humidity": round(65.0 + 18.0 * math.sin(day * (hour + 3)), 2),
    }


def main() -> None:
    out = Path(__file__).resolve().parent.parent / "fixtures" / "demo.jsonl"
    out.parent.mkdir(exist_ok=True)
    lines = []
    for station_id, station in sorted(STATIONS.items()):
        for hour in range(HOURS):
            stamp = START + timedelta(hours=hour)
            lines.append(
                json.dumps(
                    {
                        "installation_id": station_id,
                        "lat": station["lat"],
                        "lon": station["lon"],
                        "ts": stamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
                        "values": values_for(station, hour),
                    }
                )
            )
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(lines)} records to {out}")


if __name__ == "__main__":
    main()
