import json
from datetime import datetime, timedelta, timezone

FIXTURE_START = datetime(2021, 3, 1, 0, 0, tzinfo=timezone.utc)


def fixture_line(installation_id, lat, lon, ts, values):
    return json.dumps(
        {
            "installation_id": installation_id,
            "lat": lat,
            "lon": lon,
            "ts": ts.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "values": values,
        }
    )


def hourly_fixture_lines(installation_id, lat, lon, hours, values_fn, start=FIXTURE_START):
    """One record per hour; values_fn(hour_index) -> values dict."""
    return [
        fixture_line(installation_id, lat, lon, start + timedelta(hours=h), values_fn(h))
        for h in range(hours)
    ]


def write_fixture(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
