"""Operator entry point: serve, train, replay, query, alert-test.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Machine-readable
output is always JSON on stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import requests

from aircast import alerts as alerts_mod
from aircast import forecast as forecast_mod
from aircast.domain import Installation, Parameter, validate_measurement
from aircast.ingestion import load_replay_provider, parse_fixture_line, with_cache
from aircast.service import Service, build_sink, load_config
from aircast.store import hourly_aggregate

USAGE_ERROR = 1
RUNTIME_ERROR = 2

API_ENDPOINTS = ("current", "history", "forecast", "thresholds", "files")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def build_parser() -> _Parser:
    parser = _Parser(prog="aircast", description="Air-quality telemetry service")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run scheduler, API, gateway and edge node")
    serve.add_argument("--config", required=True, help="path to the JSON config file")

    train = sub.add_parser("train", help="fit a forecasting tree from a fixture")
    train.add_argument("fixture", help="JSON Lines fixture path")
    train.add_argument("parameter", choices=[p.value for p in Parameter])
    train.add_argument("--window", type=int, default=forecast_mod.DEFAULT_WINDOW)
    train.add_argument("--horizon", type=int, default=1)
    train.add_argument("--installation", type=int, default=None, help="defaults to lowest id")
    train.add_argument("--min-leaf", type=int, default=5)
    train.add_argument("--max-depth", type=int, default=12)
    train.add_argument("--no-prune", action="store_true")
    train.add_argument("--output", required=True, help="model JSON output path")

    replay = sub.add_parser("replay", help="one scheduler pass over a fixture")
    replay.add_argument("fixture", help="JSON Lines fixture path")
    replay.add_argument("config", help="path to the JSON config file")

    query = sub.add_parser("query", help="GET an endpoint of a running instance")
    query.add_argument("base_url", help="e.g. http://127.0.0.1:8080")
    query.add_argument("endpoint", choices=API_ENDPOINTS)
    query.add_argument("--lat", type=float)
    query.add_argument("--lon", type=float)

    alert_test = sub.add_parser("alert-test", help="dispatch a synthetic alert")
    alert_test.add_argument("--config", required=True)
    alert_test.add_argument("parameter", choices=[p.value for p in Parameter])
    alert_test.add_argument("value", type=float)
    return parser


def cmd_serve(args) -> int:
    config = load_config(args.config)
    service = Service(config)
    service.start()
    print(
        json.dumps({"status": "serving", "api_port": service.api_port}),
        flush=True,
    )
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def _fixture_series(fixture: str, parameter: Parameter, installation_id: int | None):
    """Full per-installation series from a fixture file (no bundle window)."""
    path = Path(fixture)
    if not path.exists():
        raise FileNotFoundError(fixture)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if line.strip():
                records.append(parse_fixture_line(line, line_number))
    ids = sorted({record.installation_id for record in records})
    if not ids:
        raise ValueError(f"fixture {fixture} has no records")
    if installation_id is None:
        installation_id = ids[0]
    elif installation_id not in ids:
        raise ValueError(f"installation {installation_id} not in fixture (has {ids})")
    samples = []
    for record in records:
        if record.installation_id != installation_id:
            continue
        measurement = validate_measurement(record.as_raw())
        value = measurement.value(parameter)
        if value is not None:
            samples.append((measurement.timestamp, value))
    if not samples:
        raise ValueError(f"fixture has no {parameter.value} values for installation {installation_id}")
    return hourly_aggregate(samples), installation_id


def cmd_train(args) -> int:
    parameter = Parameter(args.parameter)
    series, installation_id = _fixture_series(args.fixture, parameter, args.installation)
    rows = forecast_mod.build_supervised(series, args.window, args.horizon)
    train_rows, validation_rows = forecast_mod.chronological_split(rows)
    params = forecast_mod.TreeParams(
        min_leaf=args.min_leaf, max_depth=args.max_depth, prune=not args.no_prune
    )
    tree = forecast_mod.fit_tree(train_rows, params)
    if params.prune:
        tree = forecast_mod.prune(tree, validation_rows)
    forecast_mod.save_model(tree, args.output)
    scored = validation_rows or train_rows
    mae = math.fsum(
        abs(forecast_mod.predict(tree, row.features) - row.target) for row in scored
    ) / len(scored)
    print(
        json.dumps(
            {
                "model": str(Path(args.output)),
                "installation_id": installation_id,
                "parameter": parameter.value,
                "window": args.window,
                "horizon": args.horizon,
                "rows": len(rows),
                "nodes": tree.node_count(),
                "validation_mae": mae,
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_replay(args) -> int:
    config = load_config(args.config)
    replay = load_replay_provider(args.fixture)
    pinned = replay.last_timestamp()
    if pinned is None:
        print("error: fixture is empty", file=sys.stderr)
        return RUNTIME_ERROR
    provider = with_cache(replay, config.provider_cache_ttl_s)
    service = Service(config, provider=provider, clock=lambda: pinned)
    try:
        service.gateway.connect()
        report = service.tick(pinned)
    finally:
        service.broker_client.disconnect()
    print(report.to_json())
    return 0


def cmd_query(args) -> int:
    params = {}
    if args.lat is not None:
        params["lat"] = args.lat
    if args.lon is not None:
        params["lon"] = args.lon
    url = f"{args.base_url.rstrip('/')}/api/{args.endpoint}"
    response = requests.get(url, params=params, timeout=10)
    print(response.text)
    return 0 if response.ok else RUNTIME_ERROR


def cmd_alert_test(args) -> int:
    config = load_config(args.config)
    parameter = Parameter(args.parameter)
    threshold = config.thresholds.limit(parameter)
    if threshold is None:
        print(f"error: no threshold configured for {parameter.value}", file=sys.stderr)
        return RUNTIME_ERROR
    if not args.value > threshold:
        print(
            f"error: value {args.value} does not exceed threshold {threshold}",
            file=sys.stderr,
        )
        return RUNTIME_ERROR
    event = alerts_mod.AlertEvent(
        installation_id=0,
        parameter=parameter,
        observed=args.value,
        threshold=threshold,
        timestamp=datetime.now(timezone.utc),
    )
    installation = Installation(0, config.locations[0], "synthetic")
    message = alerts_mod.render_email(event, installation, config.alert_recipients)
    receipt = alerts_mod.dispatch(build_sink(config), message)
    print(
        json.dumps(
            {"sink": receipt.sink, "attempts": receipt.attempts, "ok": receipt.ok},
            sort_keys=True,
        )
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    handlers = {
        "serve": cmd_serve,
        "train": cmd_train,
        "replay": cmd_replay,
        "query": cmd_query,
        "alert-test": cmd_alert_test,
    }
    try:
        return handlers[args.command](args)
    except KeyboardInterrupt:
        return 0
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
