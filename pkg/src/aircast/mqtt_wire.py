"""Minimal MQTT 3.1.1 client: the subset this service publishes and
subscribes with (CONNECT, PUBLISH QoS 0/1, SUBSCRIBE, PING, DISCONNECT).

Implements the BrokerClient interface from aircast.broker over a TCP socket,
so production deployments can point the gateway and edge node at any
standard broker (Mosquitto et al.) via host:port configuration.
"""

from __future__ import annotations

import socket
import ssl
import struct
import threading
from typing import Callable

from aircast.broker import (
    DEFAULT_PUBLISH_TIMEOUT_S,
    NotConnected,
    PublishTimeout,
    TopicMessage,
    topic_matches,
)

CONNECT = 1
CONNACK = 2
PUBLISH = 3
PUBACK = 4
SUBSCRIBE = 8
SUBACK = 9
PINGREQ = 12
PINGRESP = 13
DISCONNECT = 14

PROTOCOL_NAME = b"MQTT"
PROTOCOL_LEVEL = 4  # 3.1.1


class MqttProtocolError(Exception):
    pass


def encode_varint(value: int) -> bytes:
    """MQTT remaining-length encoding (7 bits per byte, max 4 bytes)."""
    if value < 0 or value > 268_435_455:
        raise MqttProtocolError(f"remaining length {value} out of range")
    out = bytearray()
    while True:
        value, digit = divmod(value, 128)
        out.append(digit | (0x80 if value else 0))
        if not value:
            return bytes(out)


def decode_varint(data: bytes, offset: int = 0) -> tuple[int, int]:
    """Returns (value, bytes consumed); raises on truncation or overflow."""
    value = 0
    for i in range(4):
        if offset + i >= len(data):
            raise MqttProtocolError("truncated remaining length")
        byte = data[offset + i]
        value |= (byte & 0x7F) << (7 * i)
        if not byte & 0x80:
            return value, i + 1
    raise MqttProtocolError("remaining length exceeds 4 bytes")


def encode_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("!H", len(raw)) + raw


def decode_string(data: bytes, offset: int) -> tuple[str, int]:
    (length,) = struct.unpack_from("!H", data, offset)
    end = offset + 2 + length
    return data[offset + 2 : end].decode("utf-8"), end


def connect_packet(
    client_id: str,
    keepalive_s: int = 60,
    username: str | None = None,
    password: str | None = None,
    clean_session: bool = True,
) -> bytes:
    flags = 0x02 if clean_session else 0x00
    if username is not None:
        flags |= 0x80
    if password is not None:
        flags |= 0x40
    body = (
        encode_string(PROTOCOL_NAME.decode())
        + bytes([PROTOCOL_LEVEL, flags])
        + struct.pack("!H", keepalive_s)
        + encode_string(client_id)
    )
    if username is not None:
        body += encode_string(username)
    if password is not None:
        body += encode_string(password)
    return bytes([CONNECT << 4]) + encode_varint(len(body)) + body


def publish_packet(message: TopicMessage, packet_id: int | None) -> bytes:
    flags = (message.qos << 1) | (1 if message.retain else 0)
    body = encode_string(message.topic)
    if message.qos > 0:
        if packet_id is None:
            raise MqttProtocolError("QoS 1 publish needs a packet id")
        body += struct.pack("!H", packet_id)
    body += message.payload
    return bytes([(PUBLISH << 4) | flags]) + encode_varint(len(body)) + body


def parse_publish(flags: int, body: bytes) -> tuple[TopicMessage, int | None]:
    qos = (flags >> 1) & 0x03
    retain = bool(flags & 0x01)
    topic, offset = decode_string(body, 0)
    packet_id = None
    if qos > 0:
        (packet_id,) = struct.unpack_from("!H", body, offset)
        offset += 2
    return TopicMessage(topic, body[offset:], qos=qos, retain=retain), packet_id


def puback_packet(packet_id: int) -> bytes:
    return bytes([PUBACK << 4]) + encode_varint(2) + struct.pack("!H", packet_id)


def subscribe_packet(packet_id: int, pattern: str, qos: int = 1) -> bytes:
    body = struct.pack("!H", packet_id) + encode_string(pattern) + bytes([qos])
    return bytes([(SUBSCRIBE << 4) | 0x02]) + encode_varint(len(body)) + body


def pingreq_packet() -> bytes:
    return bytes([PINGREQ << 4, 0])


def disconnect_packet() -> bytes:
    return bytes([DISCONNECT << 4, 0])


def read_packet(read_exact: Callable[[int], bytes]) -> tuple[int, int, bytes]:
    """Reads one packet; returns (type, flags, body)."""
    first = read_exact(1)[0]
    packet_type, flags = first >> 4, first & 0x0F
    length = 0
    shift = 0
    while True:
        byte = read_exact(1)[0]
        length |= (byte & 0x7F) << shift
        if not byte & 0x80:
            break
        shift += 7
        if shift > 21:
            raise MqttProtocolError("remaining length exceeds 4 bytes")
    body = read_exact(length) if length else b""
    return packet_type, flags, body


class MqttClient:
    """Blocking MQTT 3.1.1 client with a background reader thread."""

    def __init__(
        self,
        host: str,
        port: int = 1883,
        client_id: str = "aircast",
        keepalive_s: int = 60,
        username: str | None = None,
        password: str | None = None,
        use_tls: bool = False,
        connect_timeout_s: float = 10.0,
    ):
        self.host = host
        self.port = port
        self.client_id = client_id
        self.keepalive_s = keepalive_s
        self.username = username
        self.password = password
        self.use_tls = use_tls
        self.connect_timeout_s = connect_timeout_s
        self._sock: socket.socket | None = None
        self._reader: threading.Thread | None = None
        self._lock = threading.RLock()
        self._next_packet_id = 1
        self._acks: dict[int, threading.Event] = {}
        self._subscriptions: list[tuple[str, Callable[[TopicMessage], None]]] = []
        self._connack = threading.Event()
        self._closing = False

    @property
    def connected(self) -> bool:
        return self._sock is not None and self._connack.is_set()

    def connect(self) -> None:
        with self._lock:
            if self.connected:
                return
            self._closing = False
            self._connack.clear()
            sock = socket.create_connection((self.host, self.port), timeout=self.connect_timeout_s)
            if self.use_tls:
                sock = ssl.create_default_context().wrap_socket(sock, server_hostname=self.host)
            sock.settimeout(None)
            self._sock = sock
            self._reader = threading.Thread(target=self._read_loop, daemon=True)
            self._reader.start()
            self._send(
                connect_packet(self.client_id, self.keepalive_s, self.username, self.password)
            )
        if not self._connack.wait(self.connect_timeout_s):
            self.disconnect()
            raise NotConnected(f"no CONNACK from {self.host}:{self.port}")
        with self._lock:
            for pattern, callback in self._subscriptions:
                self._send_subscribe(pattern)

    def disconnect(self) -> None:
        with self._lock:
            self._closing = True
            sock, self._sock = self._sock, None
            self._connack.clear()
        if sock is not None:
            try:
                sock.sendall(disconnect_packet())
            except OSError:
                pass
            try:
                sock.close()
            except OSError:
                pass

    def publish(self, message: TopicMessage, timeout_s: float = DEFAULT_PUBLISH_TIMEOUT_S) -> None:
        if not self.connected:
            raise NotConnected("not connected to broker")
        if message.qos == 0:
            self._send(publish_packet(message, None))
            return
        with self._lock:
            packet_id = self._claim_packet_id()
            event = threading.Event()
            self._acks[packet_id] = event
        self._send(publish_packet(message, packet_id))
        if not event.wait(timeout_s):
            self._acks.pop(packet_id, None)
            raise PublishTimeout(f"no PUBACK for packet {packet_id} within {timeout_s}s")

    def subscribe(self, pattern: str, callback: Callable[[TopicMessage], None]) -> None:
        with self._lock:
            self._subscriptions.append((pattern, callback))
            if self.connected:
                self._send_subscribe(pattern)

    def ping(self) -> None:
        self._send(pingreq_packet())

    def _claim_packet_id(self) -> int:
        packet_id = self._next_packet_id
        self._next_packet_id = self._next_packet_id % 65535 + 1
        return packet_id

    def _send_subscribe(self, pattern: str) -> None:
        self._send(subscribe_packet(self._claim_packet_id(), pattern))

    def _send(self, data: bytes) -> None:
        with self._lock:
            sock = self._sock
            if sock is None:
                raise NotConnected("socket closed")
            sock.sendall(data)

    def _read_exact(self, n: int) -> bytes:
        sock = self._sock
        if sock is None:
            raise ConnectionError("socket closed")
        chunks = b""
        while len(chunks) < n:
            chunk = sock.recv(n - len(chunks))
            if not chunk:
                raise ConnectionError("broker closed connection")
            chunks += chunk
        return chunks

    def _read_loop(self) -> None:
        try:
            while True:
                packet_type, flags, body = read_packet(self._read_exact)
                if packet_type == CONNACK:
                    if len(body) >= 2 and body[1] != 0:
                        raise MqttProtocolError(f"connection refused, code {body[1]}")
                    self._connack.set()
                elif packet_type == PUBACK:
                    (packet_id,) = struct.unpack("!H", body[:2])
                    event = self._acks.pop(packet_id, None)
                    if event:
                        event.set()
                elif packet_type == PUBLISH:
                    message, packet_id = parse_publish(flags, body)
                    if message.qos > 0 and packet_id is not None:
                        self._send(puback_packet(packet_id))
                    with self._lock:
                        callbacks = [
                            cb
                            for pattern, cb in self._subscriptions
                            if topic_matches(pattern, message.topic)
                        ]
                    for callback in callbacks:
                        callback(message)
                elif packet_type in (SUBACK, PINGRESP):
                    pass
                else:
                    raise MqttProtocolError(f"unexpected packet type {packet_type}")
        except (OSError, ConnectionError, MqttProtocolError):
            if not self._closing:
                self._connack.clear()


__all__ = [
    "MqttProtocolError",
    "MqttClient",
    "encode_varint",
    "decode_varint",
    "encode_string",
    "decode_string",
    "connect_packet",
    "publish_packet",
    "parse_publish",
    "puback_packet",
    "subscribe_packet",
    "pingreq_packet",
    "disconnect_packet",
    "read_packet",
]
