"""Orchestration: hourly polling pipeline plus the human-facing REST API.

Each tick walks every configured location through resolve -> fetch -> store
-> forecast -> alert -> publish; one location's failure never aborts the
others. Forecasts are computed at tick time and cached, so API reads stay
flat. All API endpoints are read-only.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field as dataclass_field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable

from aircast import alerts as alerts_mod
from aircast import broker as broker_mod
from aircast import forecast as forecast_mod
from aircast.domain import (
    GeoPoint,
    Installation,
    Parameter,
    floor_to_hour,
    rfc3339_format,
)
from aircast.edge import EdgeNode
from aircast.httpd import JsonHttpServer
from aircast.ingestion import (
    MeasurementProvider,
    NoInstallationInRange,
    ProviderError,
    fetch_measurements,
    load_replay_provider,
    nearest_installation,
    with_cache,
)
from aircast.store import SeriesKey, SeriesPoint, TimeSeriesStore, hourly_aggregate

API_KEY_ENV = "AIRCAST_API_KEY"
SNAPSHOT_FILE = "store.jsonl"
FORECAST_LOOKBACK = timedelta(days=14)


class ConfigError(ValueError):
    pass


@dataclass
class ServiceConfig:
    locations: list[GeoPoint]
    poll_interval_s: int = 3600
    api_host: str = "127.0.0.1"
    api_port: int = 8080
    max_distance_km: float = 50.0
    provider: dict = dataclass_field(default_factory=lambda: {"kind": "replay"})
    provider_cache_ttl_s: float = 300.0
    broker: dict = dataclass_field(default_factory=lambda: {"kind": "stub"})
    thresholds: alerts_mod.ThresholdTable = dataclass_field(
        default_factory=alerts_mod.ThresholdTable.defaults
    )
    alert_cooldown_s: float = alerts_mod.DEFAULT_COOLDOWN_S
    alert_sink: dict = dataclass_field(default_factory=lambda: {"kind": "file", "path": "alerts.jsonl"})
    alert_recipients: tuple[str, ...] = ("alerts@localhost.localdomain",)
    forecast_window: int = forecast_mod.DEFAULT_WINDOW
    forecast_params: forecast_mod.TreeParams = dataclass_field(default_factory=forecast_mod.TreeParams)
    edge_enabled: bool = False
    edge_host: str = "127.0.0.1"
    edge_port: int = 8266
    snapshot_dir: Path | None = None
    retention_days: int = 30
    static_dir: Path | None = None

    def __post_init__(self):
        if not self.locations:
            raise ConfigError("at least one location required")
        if self.poll_interval_s < 60:
            raise ConfigError("poll_interval_s must be >= 60")


def load_config(path: str | Path) -> ServiceConfig:
    """Read the JSON config file; AIRCAST_API_KEY overrides the provider key."""
    base = Path(path).parent
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    try:
        locations = [GeoPoint(item["lat"], item["lon"]) for item in raw["locations"]]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad locations: {exc}") from exc

    provider = dict(raw.get("provider", {"kind": "replay"}))
    if API_KEY_ENV in os.environ:
        provider["api_key"] = os.environ[API_KEY_ENV]
    if "fixture" in provider and not Path(provider["fixture"]).is_absolute():
        provider["fixture"] = str(base / provider["fixture"])

    thresholds_raw = raw.get("thresholds")
    if thresholds_raw is None:
        thresholds = alerts_mod.ThresholdTable.defaults()
    else:
        thresholds = alerts_mod.ThresholdTable(
            {Parameter(name): float(value) for name, value in thresholds_raw.items()}
        )

    alerts_cfg = raw.get("alerts", {})
    sink = dict(alerts_cfg.get("sink", {"kind": "file", "path": "alerts.jsonl"}))
    if sink.get("kind") == "file" and "path" in sink and not Path(sink["path"]).is_absolute():
        sink["path"] = str(base / sink["path"])

    forecast_cfg = raw.get("forecast", {})
    params = forecast_mod.TreeParams(
        min_leaf=int(forecast_cfg.get("min_leaf", 5)),
        max_depth=int(forecast_cfg.get("max_depth", 12)),
        prune=bool(forecast_cfg.get("prune", True)),
    )

    edge_cfg = raw.get("edge", {})
    snapshot_dir = raw.get("snapshot_dir")
    static_dir = raw.get("static_dir")
    cache_ttl_s = float(provider.pop("cache_ttl_s", 300.0))
    return ServiceConfig(
        locations=locations,
        poll_interval_s=int(raw.get("poll_interval_s", 3600)),
        api_host=raw.get("api_host", "127.0.0.1"),
        api_port=int(raw.get("api_port", 8080)),
        max_distance_km=float(raw.get("max_distance_km", 50.0)),
        provider=provider,
        provider_cache_ttl_s=cache_ttl_s,
        broker=dict(raw.get("broker", {"kind": "stub"})),
        thresholds=thresholds,
        alert_cooldown_s=float(alerts_cfg.get("cooldown_s", alerts_mod.DEFAULT_COOLDOWN_S)),
        alert_sink=sink,
        alert_recipients=tuple(alerts_cfg.get("recipients", ("alerts@localhost.localdomain",))),
        forecast_window=int(forecast_cfg.get("window", forecast_mod.DEFAULT_WINDOW)),
        forecast_params=params,
        edge_enabled=bool(edge_cfg.get("enabled", False)),
        edge_host=edge_cfg.get("host", "127.0.0.1"),
        edge_port=int(edge_cfg.get("port", 8266)),
        snapshot_dir=(base / snapshot_dir if snapshot_dir else None),
        retention_days=int(raw.get("retention_days", 30)),
        static_dir=(base / static_dir if static_dir else None),
    )


def build_provider(config: ServiceConfig) -> MeasurementProvider:
    from aircast.ingestion import LiveProvider

    kind = config.provider.get("kind", "replay")
    if kind == "replay":
        fixture = config.provider.get("fixture")
        if not fixture:
            raise ConfigError("replay provider needs a 'fixture' path")
        inner = load_replay_provider(fixture)
    elif kind == "live":
        base_url = config.provider.get("base_url", "https://airapi.airly.eu")
        api_key = config.provider.get("api_key")
        if not api_key:
            raise ConfigError(f"live provider needs an api_key (or {API_KEY_ENV})")
        inner = LiveProvider(base_url, api_key)
    else:
        raise ConfigError(f"unknown provider kind {kind!r}")
    return with_cache(inner, config.provider_cache_ttl_s)


def build_broker_client(config: ServiceConfig, shared_broker=None):
    kind = config.broker.get("kind", "stub")
    if kind == "stub":
        broker = shared_broker or broker_mod.InProcessBroker()
        return broker_mod.StubClient(broker), broker
    if kind == "mqtt":
        from aircast.mqtt_wire import MqttClient

        client = MqttClient(
            host=config.broker.get("host", "127.0.0.1"),
            port=int(config.broker.get("port", 1883)),
            client_id=config.broker.get("client_id", "aircast-gateway"),
            username=config.broker.get("username"),
            password=config.broker.get("password"),
            use_tls=bool(config.broker.get("tls", False)),
        )
        return client, None
    raise ConfigError(f"unknown broker kind {kind!r}")


def build_sink(config: ServiceConfig):
    sink = config.alert_sink
    kind = sink.get("kind", "file")
    if kind == "file":
        return alerts_mod.FileSink(sink.get("path", "alerts.jsonl"))
    if kind == "webhook":
        return alerts_mod.WebhookSink(sink["url"], sink.get("bearer_token"))
    if kind == "smtp":
        return alerts_mod.SmtpSink(
            host=sink["host"],
            port=int(sink.get("port", 587)),
            from_address=sink.get("from", "aircast@localhost.localdomain"),
            username=sink.get("username"),
            password=sink.get("password"),
            use_tls=bool(sink.get("tls", True)),
        )
    raise ConfigError(f"unknown sink kind {kind!r}")


@dataclass
class LocationReport:
    latitude: float
    longitude: float
    installation_id: int | None = None
    records_ingested: int = 0
    points_appended: int = 0
    records_dropped: int = 0
    forecasts_produced: int = 0
    alerts_emitted: int = 0
    errors: list[str] = dataclass_field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "location": {"lat": self.latitude, "lon": self.longitude},
            "installation_id": self.installation_id,
            "records_ingested": self.records_ingested,
            "points_appended": self.points_appended,
            "records_dropped": self.records_dropped,
            "forecasts_produced": self.forecasts_produced,
            "alerts_emitted": self.alerts_emitted,
            "errors": list(self.errors),
        }


@dataclass
class PollReport:
    started: datetime
    finished: datetime
    locations: list[LocationReport]

    def as_dict(self) -> dict:
        return {
            "started": rfc3339_format(self.started),
            "finished": rfc3339_format(self.finished),
            "locations": [item.as_dict() for item in self.locations],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


class Service:
    """Wires provider, store, learner, alerting, gateway, edge and API."""

    def __init__(
        self,
        config: ServiceConfig,
        provider: MeasurementProvider | None = None,
        broker_client=None,
        clock: Callable[[], datetime] | None = None,
    ):
        self.config = config
        self.provider = provider or build_provider(config)
        if broker_client is None:
            broker_client, self._own_broker = build_broker_client(config)
        else:
            self._own_broker = None
        self.broker_client = broker_client
        self.gateway = broker_mod.Gateway(broker_client)
        self.store = TimeSeriesStore(retention=timedelta(days=config.retention_days))
        self.sink = build_sink(config)
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self._alert_state = alerts_mod.AlertState()
        self._forecasts: dict[tuple[int, Parameter], forecast_mod.ForecastSet] = {}
        self._resolved: dict[tuple[float, float], Installation] = {}
        self._lock = threading.RLock()
        self._api_server: JsonHttpServer | None = None
        self._edge: EdgeNode | None = None
        self._stop = threading.Event()
        self._scheduler: threading.Thread | None = None

    # -- pipeline ----------------------------------------------------------

    def _resolve(self, point: GeoPoint) -> Installation:
        key = (point.latitude, point.longitude)
        with self._lock:
            cached = self._resolved.get(key)
        if cached is not None:
            return cached
        installation = nearest_installation(self.provider, point, self.config.max_distance_km)
        with self._lock:
            self._resolved[key] = installation
        return installation

    def tick(self, now: datetime | None = None) -> PollReport:
        started = now or self.clock()
        reports = [self._process_location(point, started) for point in self.config.locations]
        self.store.compact(started)
        if self.config.snapshot_dir is not None:
            self.config.snapshot_dir.mkdir(parents=True, exist_ok=True)
            self.store.save_snapshot(self.config.snapshot_dir / SNAPSHOT_FILE)
        finished = now or self.clock()
        return PollReport(started, finished, reports)

    def _process_location(self, point: GeoPoint, now: datetime) -> LocationReport:
        report = LocationReport(point.latitude, point.longitude)
        try:
            installation = self._resolve(point)
            report.installation_id = installation.id
            bundle = fetch_measurements(self.provider, installation)
            report.records_dropped = bundle.dropped_records
            report.records_ingested = len(bundle.history) + 1

            records = list(bundle.history) + [bundle.current]
            samples: dict[Parameter, list[tuple[datetime, float]]] = {}
            for record in records:
                for parameter in record.present_parameters():
                    samples.setdefault(parameter, []).append(
                        (record.timestamp, record.value(parameter))
                    )
            for parameter, pairs in sorted(samples.items(), key=lambda kv: kv[0].value):
                key = SeriesKey(installation.id, parameter)
                for series_point in hourly_aggregate(pairs):
                    self.store.append(key, series_point)
                    report.points_appended += 1

            self._publish_current(installation, bundle.current, report)
            self._forecast_parameters(installation, now, report)
            self._raise_alerts(installation, bundle.current, report)
        except Exception as exc:  # noqa: BLE001 - isolate per location
            report.errors.append(f"{type(exc).__name__}: {exc}")
        return report

    def _publish_current(self, installation, current, report: LocationReport) -> None:
        for parameter in current.present_parameters():
            point = SeriesPoint(current.timestamp, current.value(parameter))
            try:
                self.gateway.publish_measurement(installation.id, parameter, point)
            except broker_mod.BrokerError as exc:
                report.errors.append(f"publish {parameter.value}: {exc}")

    def _forecast_parameters(self, installation, now: datetime, report: LocationReport) -> None:
        window = self.config.forecast_window
        for key in self.store.keys():
            if key.installation_id != installation.id:
                continue
            series = self.store.query_range(key, now - FORECAST_LOOKBACK, now + timedelta(hours=1))
            if len(series) < window + max(forecast_mod.FORECAST_HORIZONS):
                continue
            try:
                result = forecast_mod.forecast_next(
                    series, key.parameter.value, self.config.forecast_params, window
                )
            except forecast_mod.SeriesTooShort:
                continue
            except forecast_mod.ForecastError as exc:
                report.errors.append(f"forecast {key.parameter.value}: {exc}")
                continue
            with self._lock:
                self._forecasts[(installation.id, key.parameter)] = result
            report.forecasts_produced += 1
            try:
                self.gateway.publish_forecast(installation.id, key.parameter, result)
            except broker_mod.BrokerError as exc:
                report.errors.append(f"publish forecast {key.parameter.value}: {exc}")

    def _raise_alerts(self, installation, current, report: LocationReport) -> None:
        with self._lock:
            events, self._alert_state = alerts_mod.evaluate(
                installation.id,
                current,
                self.config.thresholds,
                self._alert_state,
                self.config.alert_cooldown_s,
            )
        for event in events:
            message = alerts_mod.render_email(event, installation, self.config.alert_recipients)
            try:
                alerts_mod.dispatch(self.sink, message)
                report.alerts_emitted += 1
            except alerts_mod.AlertError as exc:
                report.errors.append(f"alert {event.parameter.value}: {exc}")
        return None

    # -- API ---------------------------------------------------------------

    def handle_api_request(self, path: str, query: dict[str, str]) -> tuple[int, object]:
        if path == "/api/thresholds":
            return 200, {
                parameter.value: limit
                for parameter, limit in sorted(
                    self.config.thresholds.limits.items(), key=lambda kv: kv[0].value
                )
            }
        if path == "/api/files":
            return 200, self._list_files()
        if path in ("/api/current", "/api/history", "/api/forecast"):
            parsed = self._parse_point(query)
            if isinstance(parsed, tuple):
                return parsed
            try:
                installation = self._resolve(parsed)
            except (NoInstallationInRange, ProviderError) as exc:
                return 503, {"error": f"{type(exc).__name__}: {exc}"}
            if path == "/api/current":
                return self._api_current(installation)
            if path == "/api/history":
                return self._api_history(installation)
            return self._api_forecast(installation)
        return 404, {"error": "not found"}

    def _parse_point(self, query: dict[str, str]):
        try:
            return GeoPoint(float(query["lat"]), float(query["lon"]))
        except (KeyError, TypeError, ValueError) as exc:
            return 400, {"error": f"invalid coordinates: {exc}"}

    def _api_current(self, installation: Installation) -> tuple[int, object]:
        values = {}
        for key in self.store.keys():
            if key.installation_id != installation.id:
                continue
            latest = self.store.latest(key)
            if latest is not None:
                values[key.parameter.value] = {
                    "ts": rfc3339_format(latest.timestamp),
                    "value": latest.value,
                }
        body = {"installation_id": installation.id, "values": values}
        if not values:
            body["no_data"] = True
        return 200, body

    def _api_history(self, installation: Installation) -> tuple[int, object]:
        now = self.clock()
        series_out = {}
        for key in self.store.keys():
            if key.installation_id != installation.id:
                continue
            points = self.store.query_range(key, now - timedelta(hours=24), now)
            if points:
                series_out[key.parameter.value] = [
                    {"ts": rfc3339_format(p.timestamp), "value": p.value} for p in points
                ]
        body = {"installation_id": installation.id, "series": series_out}
        if not series_out:
            body["no_data"] = True
        return 200, body

    def _api_forecast(self, installation: Installation) -> tuple[int, object]:
        with self._lock:
            entries = {
                key[1].value: fs
                for key, fs in self._forecasts.items()
                if key[0] == installation.id
            }
        forecasts = {
            name: {
                "base": rfc3339_format(fs.base_time),
                "h1": fs.horizons[1],
                "h2": fs.horizons[2],
                "h3": fs.horizons[3],
                "model_id": fs.model_id,
            }
            for name, fs in sorted(entries.items())
        }
        body = {"installation_id": installation.id, "forecasts": forecasts}
        if not forecasts:
            body["no_data"] = True
        return 200, body

    def _list_files(self) -> list[dict]:
        directory = self.config.snapshot_dir
        if directory is None or not directory.is_dir():
            return []
        out = []
        for entry in sorted(directory.iterdir()):
            if entry.is_file():
                stat = entry.stat()
                out.append(
                    {
                        "name": entry.name,
                        "bytes": stat.st_size,
                        "modified": rfc3339_format(
                            datetime.fromtimestamp(stat.st_mtime, tz=timezone.utc)
                        ),
                    }
                )
        return out

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        """Serve mode: gateway, API server, optional edge node, scheduler."""
        try:
            self.gateway.connect()
        except broker_mod.BrokerError:
            pass  # messages buffer until the broker comes back
        self._api_server = JsonHttpServer(
            self.handle_api_request,
            host=self.config.api_host,
            port=self.config.api_port,
            static_dir=self.config.static_dir,
        )
        self._api_server.start()
        if self.config.edge_enabled:
            edge_client = self._build_edge_client()
            if edge_client is not None:
                self._edge = EdgeNode(
                    edge_client, host=self.config.edge_host, port=self.config.edge_port
                )
                self._edge.start()
        self._stop.clear()
        self._scheduler = threading.Thread(target=self._run_scheduler, daemon=True)
        self._scheduler.start()

    def _build_edge_client(self):
        if self._own_broker is not None:
            return broker_mod.StubClient(self._own_broker)
        if isinstance(self.broker_client, broker_mod.StubClient):
            return broker_mod.StubClient(self.broker_client.broker)
        if self.config.broker.get("kind") == "mqtt":
            from aircast.mqtt_wire import MqttClient

            return MqttClient(
                host=self.config.broker.get("host", "127.0.0.1"),
                port=int(self.config.broker.get("port", 1883)),
                client_id=self.config.broker.get("client_id", "aircast-gateway") + "-edge",
                username=self.config.broker.get("username"),
                password=self.config.broker.get("password"),
                use_tls=bool(self.config.broker.get("tls", False)),
            )
        return None

    @property
    def api_port(self) -> int:
        if self._api_server is None:
            raise RuntimeError("service not started")
        return self._api_server.port

    def _run_scheduler(self) -> None:
        while not self._stop.is_set():
            try:
                self.tick()
            except Exception:  # noqa: BLE001 - scheduler must survive anything
                pass
            self._stop.wait(self.config.poll_interval_s)

    def stop(self) -> None:
        self._stop.set()
        if self._scheduler is not None:
            self._scheduler.join(timeout=5)
        if self._api_server is not None:
            self._api_server.stop()
        if self._edge is not None:
            self._edge.stop()
        self.broker_client.disconnect()


__all__ = [
    "API_KEY_ENV",
    "SNAPSHOT_FILE",
    "ConfigError",
    "ServiceConfig",
    "load_config",
    "build_provider",
    "build_broker_client",
    "build_sink",
    "LocationReport",
    "PollReport",
    "Service",
]
