"""Software stand-in for the ESP8266/NodeMCU subscriber node.

Subscribes to the broker, keeps only the latest payload per topic in a
bounded cache, and re-serves that cache to local clients over HTTP. The node
does no computation on payloads and never blocks a request on broker
connectivity; retained messages re-warm the cache after a restart.
"""

from __future__ import annotations

import json
import threading
from collections import OrderedDict
from datetime import datetime, timezone
from typing import Callable, Iterable

from aircast.broker import BrokerClient, TOPIC_ROOT, TopicMessage
from aircast.httpd import JsonHttpServer

MAX_TOPICS = 10_000
DEFAULT_EDGE_PORT = 8266
DEFAULT_FILTERS = (f"{TOPIC_ROOT}/#",)


class EdgeCache:
    """Latest payload per topic; least-recently-updated entry is evicted."""

    def __init__(self, max_topics: int = MAX_TOPICS):
        self._entries: OrderedDict[str, tuple[bytes, datetime]] = OrderedDict()
        self._max_topics = max_topics
        self._lock = threading.RLock()

    def apply(self, message: TopicMessage, received_at: datetime | None = None) -> None:
        received_at = received_at or datetime.now(timezone.utc)
        with self._lock:
            if message.topic in self._entries:
                self._entries.move_to_end(message.topic)
            self._entries[message.topic] = (message.payload, received_at)
            while len(self._entries) > self._max_topics:
                self._entries.popitem(last=False)

    def get(self, topic: str) -> tuple[bytes, datetime] | None:
        with self._lock:
            return self._entries.get(topic)

    def items(self) -> list[tuple[str, bytes]]:
        with self._lock:
            return [(topic, payload) for topic, (payload, _) in self._entries.items()]

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def apply_message(cache: EdgeCache, message: TopicMessage) -> EdgeCache:
    cache.apply(message)
    return cache


def _decode(payload: bytes) -> object | None:
    try:
        return json.loads(payload)
    except (ValueError, UnicodeDecodeError):
        return None


def serve_request(cache: EdgeCache, path: str, query: dict[str, str]) -> tuple[int, object]:
    """Pure request handler over the local cache; see module docstring."""
    if path == "/health":
        return 200, {"status": "ok", "topics": len(cache)}
    if path not in ("/current", "/forecast"):
        return 404, {"error": "not found"}
    raw_id = query.get("installation")
    if raw_id is None or not raw_id.lstrip("-").isdigit():
        return 400, {"error": "missing or non-integer 'installation' parameter"}
    installation_id = int(raw_id)
    prefix = f"{TOPIC_ROOT}/{installation_id}/"
    want_forecast = path == "/forecast"
    out: dict[str, object] = {}
    for topic, payload in cache.items():
        if not topic.startswith(prefix):
            continue
        levels = topic.split("/")
        if want_forecast and len(levels) == 4 and levels[3] == "forecast":
            decoded = _decode(payload)
            if decoded is not None:
                out[levels[2]] = decoded
        elif not want_forecast and len(levels) == 3:
            decoded = _decode(payload)
            if decoded is not None:
                out[levels[2]] = decoded
    return 200, out


class EdgeNode:
    """Broker subscriber plus local HTTP server around one EdgeCache."""

    def __init__(
        self,
        client: BrokerClient,
        filters: Iterable[str] = DEFAULT_FILTERS,
        host: str = "127.0.0.1",
        port: int = DEFAULT_EDGE_PORT,
        clock: Callable[[], datetime] | None = None,
    ):
        self.cache = EdgeCache()
        self._client = client
        self._filters = tuple(filters)
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._server = JsonHttpServer(self._dispatch, host=host, port=port)

    def _on_message(self, message: TopicMessage) -> None:
        self.cache.apply(message, self._clock())

    def _dispatch(self, path: str, query: dict[str, str]) -> tuple[int, object]:
        return serve_request(self.cache, path, query)

    @property
    def port(self) -> int:
        return self._server.port

    def start(self) -> None:
        for pattern in self._filters:
            self._client.subscribe(pattern, self._on_message)
        if not self._client.connected:
            self._client.connect()
        self._server.start()

    def stop(self) -> None:
        self._server.stop()
        self._client.disconnect()


__all__ = [
    "MAX_TOPICS",
    "DEFAULT_EDGE_PORT",
    "DEFAULT_FILTERS",
    "EdgeCache",
    "apply_message",
    "serve_request",
    "EdgeNode",
]
