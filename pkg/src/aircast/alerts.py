"""Safe-level evaluation and emergency-email dispatch.

A measurement triggers one alert per parameter strictly above its configured
threshold; repeats for the same (installation, parameter) are suppressed
inside a cooldown window. Messages go out through pluggable sinks (SMTP,
append-to-file, HTTP webhook) with bounded retries.
"""

from __future__ import annotations

import json
import re
import smtplib
import time
from dataclasses import dataclass, field
from datetime import datetime
from email.mime.text import MIMEText
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping

import requests

from aircast.domain import Installation, Measurement, Parameter, rfc3339_format

DEFAULT_COOLDOWN_S = 3600.0
RETRY_DELAYS_S = (1.0, 2.0, 4.0)

UNITS: dict[Parameter, str] = {
    Parameter.PM1: "ug/m3",
    Parameter.PM25: "ug/m3",
    Parameter.PM10: "ug/m3",
    Parameter.TEMPERATURE: "degC",
    Parameter.PRESSURE: "hPa",
    Parameter.HUMIDITY: "%RH",
    Parameter.AQI: "CAQI points",
}

_ADDRESS_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")


class AlertError(Exception):
    pass


class SinkMisconfigured(AlertError):
    pass


class DeliveryFailed(AlertError):
    def __init__(self, attempts: int, cause: str):
        self.attempts = attempts
        super().__init__(f"delivery failed after {attempts} attempts: {cause}")


class Severity(Enum):
    EXCEEDED = "exceeded"


@dataclass(frozen=True)
class ThresholdTable:
    """Safe-level upper bound per parameter; unset parameters never alert."""

    limits: Mapping[Parameter, float]

    def __post_init__(self):
        for parameter, limit in self.limits.items():
            if limit <= 0:
                raise ValueError(f"threshold for {parameter.value} must be positive")

    @classmethod
    def defaults(cls) -> "ThresholdTable":
        # WHO 2021 24-hour guideline values for the particulates; the CAQI
        # bound marks the top of the "high" band. All configurable.
        return cls(
            {
                Parameter.PM1: 15.0,
                Parameter.PM25: 15.0,
                Parameter.PM10: 45.0,
                Parameter.AQI: 75.0,
            }
        )

    def limit(self, parameter: Parameter) -> float | None:
        return self.limits.get(parameter)


@dataclass(frozen=True)
class AlertEvent:
    installation_id: int
    parameter: Parameter
    observed: float
    threshold: float
    timestamp: datetime
    severity: Severity = Severity.EXCEEDED

    def __post_init__(self):
        if not self.observed > self.threshold:
            raise ValueError("alert requires observed strictly above threshold")


@dataclass(frozen=True)
class AlertState:
    """Last emitted alert per (installation, parameter); immutable."""

    last_fired: Mapping[tuple[int, Parameter], datetime] = field(default_factory=dict)

    def with_event(self, event: AlertEvent) -> "AlertState":
        updated = dict(self.last_fired)
        updated[(event.installation_id, event.parameter)] = event.timestamp
        return AlertState(updated)


@dataclass(frozen=True)
class EmailMessage:
    to: tuple[str, ...]
    subject: str
    body: str
    timestamp: datetime | None = None

    def __post_init__(self):
        if not self.subject or not self.body:
            raise ValueError("subject and body must be non-empty")
        if not self.to:
            raise ValueError("at least one recipient required")
        for address in self.to:
            if not _ADDRESS_RE.match(address):
                raise ValueError(f"invalid email address {address!r}")


def evaluate(
    installation_id: int,
    measurement: Measurement,
    table: ThresholdTable,
    state: AlertState,
    cooldown_s: float = DEFAULT_COOLDOWN_S,
) -> tuple[list[AlertEvent], AlertState]:
    """Pure state transition: threshold events for one measurement.

    Emits for each present parameter whose value is strictly above its
    threshold, unless the same (installation, parameter) fired less than
    cooldown_s ago. Only emitted events advance the state.
    """
    if cooldown_s < 0:
        raise ValueError("cooldown must be >= 0")
    events: list[AlertEvent] = []
    for parameter in measurement.present_parameters():
        limit = table.limit(parameter)
        if limit is None:
            continue
        value = measurement.value(parameter)
        if not value > limit:
            continue
        fired = state.last_fired.get((installation_id, parameter))
        if fired is not None and (measurement.timestamp - fired).total_seconds() < cooldown_s:
            continue
        event = AlertEvent(installation_id, parameter, value, limit, measurement.timestamp)
        events.append(event)
        state = state.with_event(event)
    return events, state


def _fmt(value: float) -> str:
    """At most two decimal places, trailing zeros trimmed."""
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return text if text else "0"


def render_email(
    event: AlertEvent, installation: Installation, to: tuple[str, ...] = ("alerts@localhost.localdomain",)
) -> EmailMessage:
    """Deterministic plain-text emergency email for one threshold crossing."""
    name = event.parameter.name
    subject = f"AIR QUALITY ALERT: {name} at installation {installation.id}"
    unit = UNITS[event.parameter]
    body = "\n".join(
        [
            f"Air quality parameter {name} is above its safe level.",
            "",
            f"observed: {_fmt(event.observed)} {unit}",
            f"threshold: {_fmt(event.threshold)} {unit}",
            f"installation: {installation.id} at "
            f"({_fmt(installation.point.latitude)}, {_fmt(installation.point.longitude)})",
            f"time: {rfc3339_format(event.timestamp)}",
        ]
    )
    return EmailMessage(to=tuple(to), subject=subject, body=body, timestamp=event.timestamp)


@dataclass(frozen=True)
class DeliveryReceipt:
    sink: str
    attempts: int
    ok: bool


class FileSink:
    """Appends each message as one JSON line; the test-friendly default."""

    kind = "file"

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if self.path.exists() and self.path.is_dir():
            raise SinkMisconfigured(f"{self.path} is a directory")

    def send(self, message: EmailMessage) -> None:
        line = json.dumps(
            {
                "to": list(message.to),
                "subject": message.subject,
                "body": message.body,
                "ts": rfc3339_format(message.timestamp) if message.timestamp else None,
            },
            sort_keys=True,
        )
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")


class WebhookSink:
    """POSTs the message as JSON to a configured URL."""

    kind = "webhook"

    def __init__(self, url: str, bearer_token: str | None = None, timeout_s: float = 10.0):
        if not url.startswith(("http://", "https://")):
            raise SinkMisconfigured(f"webhook url {url!r} is not http(s)")
        self.url = url
        self.bearer_token = bearer_token
        self.timeout_s = timeout_s

    def send(self, message: EmailMessage) -> None:
        headers = {}
        if self.bearer_token:
            headers["Authorization"] = f"Bearer {self.bearer_token}"
        response = requests.post(
            self.url,
            json={"to": list(message.to), "subject": message.subject, "body": message.body},
            headers=headers,
            timeout=self.timeout_s,
        )
        response.raise_for_status()


class SmtpSink:
    """Relays through a configured SMTP host."""

    kind = "smtp"

    def __init__(
        self,
        host: str,
        port: int,
        from_address: str,
        username: str | None = None,
        password: str | None = None,
        use_tls: bool = False,
        timeout_s: float = 10.0,
    ):
        if not host:
            raise SinkMisconfigured("smtp host missing")
        self.host = host
        self.port = port
        self.from_address = from_address
        self.username = username
        self.password = password
        self.use_tls = use_tls
        self.timeout_s = timeout_s

    def send(self, message: EmailMessage) -> None:
        mime = MIMEText(message.body)
        mime["Subject"] = message.subject
        mime["From"] = self.from_address
        mime["To"] = ", ".join(message.to)
        with smtplib.SMTP(self.host, self.port, timeout=self.timeout_s) as client:
            if self.use_tls:
                client.starttls()
            if self.username:
                client.login(self.username, self.password or "")
            client.sendmail(self.from_address, list(message.to), mime.as_string())


def dispatch(
    sink,
    message: EmailMessage,
    sleep: Callable[[float], None] = time.sleep,
) -> DeliveryReceipt:
    """At-least-once delivery: up to 3 retries at 1 s, 2 s, 4 s backoff."""
    last_error = ""
    for attempt in range(1, len(RETRY_DELAYS_S) + 2):
        try:
            sink.send(message)
            return DeliveryReceipt(sink.kind, attempt, ok=True)
        except Exception as exc:  # noqa: BLE001 - any sink failure is retryable
            last_error = str(exc)
            if attempt <= len(RETRY_DELAYS_S):
                sleep(RETRY_DELAYS_S[attempt - 1])
    raise DeliveryFailed(len(RETRY_DELAYS_S) + 1, last_error)


__all__ = [
    "DEFAULT_COOLDOWN_S",
    "RETRY_DELAYS_S",
    "UNITS",
    "AlertError",
    "SinkMisconfigured",
    "DeliveryFailed",
    "Severity",
    "ThresholdTable",
    "AlertEvent",
    "AlertState",
    "EmailMessage",
    "evaluate",
    "render_email",
    "DeliveryReceipt",
    "FileSink",
    "WebhookSink",
    "SmtpSink",
    "dispatch",
]
