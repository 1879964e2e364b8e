"""Publish side of the MQTT layer plus an in-process broker for tests.

The gateway serializes measurements and forecasts to canonical JSON and
publishes them retained at QoS 1, so a late subscriber is warm immediately.
While the client is disconnected, outgoing messages queue in a bounded
drop-oldest buffer and flush in order on reconnect.

The in-process broker implements the semantics the system relies on (topic
filtering with + and # wildcards, retained messages, QoS 1 acknowledgement)
without any network; production deployments point the wire client at a real
broker instead (see aircast.mqtt_wire).
"""

from __future__ import annotations

import json
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol

from aircast.domain import Parameter, rfc3339_format
from aircast.forecast import ForecastSet
from aircast.store import SeriesPoint

TOPIC_ROOT = "aq"
OFFLINE_BUFFER_LIMIT = 1000
DEFAULT_PUBLISH_TIMEOUT_S = 5.0


class BrokerError(Exception):
    pass


class NotConnected(BrokerError):
    pass


class PublishTimeout(BrokerError):
    pass


class InvalidTopic(BrokerError):
    pass


class MessageKind(Enum):
    MEASUREMENT = "measurement"
    FORECAST = "forecast"


@dataclass(frozen=True)
class TopicMessage:
    topic: str
    payload: bytes
    qos: int = 1
    retain: bool = False

    def __post_init__(self):
        validate_topic(self.topic)
        if self.qos not in (0, 1):
            raise ValueError(f"qos {self.qos} unsupported")


def validate_topic(topic: str) -> None:
    """Publish-side topic rules: non-empty, no wildcards, no edge slashes."""
    if not topic:
        raise InvalidTopic("empty topic")
    if "+" in topic or "#" in topic:
        raise InvalidTopic(f"wildcards not allowed in published topic {topic!r}")
    if topic.startswith("/") or topic.endswith("/"):
        raise InvalidTopic(f"leading/trailing slash in {topic!r}")


def topic_matches(pattern: str, topic: str) -> bool:
    """MQTT filter matching: + is one level, # the (possibly empty) rest."""
    levels = pattern.split("/")
    parts = topic.split("/")
    for i, level in enumerate(levels):
        if level == "#":
            return i == len(levels) - 1
        if i >= len(parts):
            return False
        if level != "+" and level != parts[i]:
            return False
    return len(levels) == len(parts)


def topic_for(installation_id: int, parameter: Parameter, kind: MessageKind) -> str:
    base = f"{TOPIC_ROOT}/{installation_id}/{parameter.value}"
    return base if kind is MessageKind.MEASUREMENT else f"{base}/forecast"


def encode_payload(obj: dict) -> bytes:
    """Canonical JSON so equal values always publish equal bytes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def measurement_payload(point: SeriesPoint) -> bytes:
    return encode_payload({"ts": rfc3339_format(point.timestamp), "value": point.value})


def forecast_payload(forecast: ForecastSet) -> bytes:
    return encode_payload(
        {
            "base": rfc3339_format(forecast.base_time),
            "h1": forecast.horizons[1],
            "h2": forecast.horizons[2],
            "h3": forecast.horizons[3],
            "model_id": forecast.model_id,
        }
    )


class BrokerClient(Protocol):
    """What the gateway and edge node need from any broker connection."""

    @property
    def connected(self) -> bool: ...

    def connect(self) -> None: ...

    def disconnect(self) -> None: ...

    def publish(self, message: TopicMessage, timeout_s: float = DEFAULT_PUBLISH_TIMEOUT_S) -> None: ...

    def subscribe(self, pattern: str, callback: Callable[[TopicMessage], None]) -> None: ...


class InProcessBroker:
    """Broker stub: wildcard routing, retained messages, synchronous QoS 1."""

    def __init__(self):
        self._lock = threading.RLock()
        self._retained: dict[str, TopicMessage] = {}
        self._subscriptions: list[tuple[str, Callable[[TopicMessage], None]]] = []

    def publish(self, message: TopicMessage) -> None:
        with self._lock:
            if message.retain:
                if message.payload:
                    self._retained[message.topic] = message
                else:
                    self._retained.pop(message.topic, None)
            targets = [cb for pattern, cb in self._subscriptions if topic_matches(pattern, message.topic)]
        for callback in targets:
            callback(message)

    def subscribe(self, pattern: str, callback: Callable[[TopicMessage], None]) -> None:
        with self._lock:
            self._subscriptions.append((pattern, callback))
            warm = [
                self._retained[topic]
                for topic in sorted(self._retained)
                if topic_matches(pattern, topic)
            ]
        for message in warm:
            callback(message)

    def unsubscribe_all(self, callback_owner: set[Callable]) -> None:
        with self._lock:
            self._subscriptions = [
                (pattern, cb) for pattern, cb in self._subscriptions if cb not in callback_owner
            ]

    def retained_topics(self) -> list[str]:
        with self._lock:
            return sorted(self._retained)


class StubClient:
    """Client bound to an InProcessBroker; mimics connect/disconnect cycles."""

    def __init__(self, broker: InProcessBroker):
        self.broker = broker
        self._connected = False
        self._subscriptions: list[tuple[str, Callable[[TopicMessage], None]]] = []
        self._lock = threading.RLock()

    @property
    def connected(self) -> bool:
        return self._connected

    def connect(self) -> None:
        with self._lock:
            if self._connected:
                return
            self._connected = True
            # clean-session client: re-subscribe, broker re-sends retained
            for pattern, callback in self._subscriptions:
                self.broker.subscribe(pattern, callback)

    def disconnect(self) -> None:
        with self._lock:
            if not self._connected:
                return
            self._connected = False
            self.broker.unsubscribe_all({cb for _, cb in self._subscriptions})

    def publish(self, message: TopicMessage, timeout_s: float = DEFAULT_PUBLISH_TIMEOUT_S) -> None:
        if not self._connected:
            raise NotConnected("stub client is disconnected")
        self.broker.publish(message)

    def subscribe(self, pattern: str, callback: Callable[[TopicMessage], None]) -> None:
        with self._lock:
            self._subscriptions.append((pattern, callback))
            if self._connected:
                self.broker.subscribe(pattern, callback)


class Gateway:
    """Serializes samples and forecasts and publishes them retained at QoS 1."""

    def __init__(self, client: BrokerClient, buffer_limit: int = OFFLINE_BUFFER_LIMIT):
        self._client = client
        self._buffer: deque[TopicMessage] = deque(maxlen=buffer_limit)
        self._lock = threading.RLock()

    @property
    def buffered(self) -> int:
        return len(self._buffer)

    def connect(self) -> None:
        self._client.connect()
        self.flush()

    def flush(self) -> None:
        """Redeliver buffered messages in original order."""
        with self._lock:
            while self._buffer and self._client.connected:
                message = self._buffer[0]
                self._client.publish(message)
                self._buffer.popleft()

    def publish_measurement(self, installation_id: int, parameter: Parameter, point: SeriesPoint) -> None:
        topic = topic_for(installation_id, parameter, MessageKind.MEASUREMENT)
        self._submit(TopicMessage(topic, measurement_payload(point), qos=1, retain=True))

    def publish_forecast(self, installation_id: int, parameter: Parameter, forecast: ForecastSet) -> None:
        topic = topic_for(installation_id, parameter, MessageKind.FORECAST)
        self._submit(TopicMessage(topic, forecast_payload(forecast), qos=1, retain=True))

    def _submit(self, message: TopicMessage) -> None:
        with self._lock:
            if not self._client.connected:
                self._buffer.append(message)
                raise NotConnected("broker offline; message buffered for redelivery")
            self.flush()
            self._client.publish(message)


__all__ = [
    "TOPIC_ROOT",
    "OFFLINE_BUFFER_LIMIT",
    "DEFAULT_PUBLISH_TIMEOUT_S",
    "BrokerError",
    "NotConnected",
    "PublishTimeout",
    "InvalidTopic",
    "MessageKind",
    "TopicMessage",
    "validate_topic",
    "topic_matches",
    "topic_for",
    "encode_payload",
    "measurement_payload",
    "forecast_payload",
    "BrokerClient",
    "InProcessBroker",
    "StubClient",
    "Gateway",
]
