"""Threaded smoke tests for the cross-task contracts."""

import json
import threading
from datetime import datetime, timedelta, timezone

from aircast.broker import Gateway, InProcessBroker, StubClient
from aircast.domain import Parameter
from aircast.store import SeriesKey, SeriesPoint, TimeSeriesStore

H0 = datetime(2021, 3, 1, 0, 0, tzinfo=timezone.utc)


def test_store_concurrent_writers_and_readers():
    store = TimeSeriesStore()
    keys = [SeriesKey(i, Parameter.PM25) for i in range(4)]
    stop = threading.Event()
    failures = []

    def writer(key):
        for n in range(300):
            store.append(key, SeriesPoint(H0 + timedelta(hours=n % 48), float(n)))

    def reader(key):
        while not stop.is_set():
            points = store.query_range(key, H0, H0 + timedelta(hours=48))
            stamps = [p.timestamp for p in points]
            if stamps != sorted(stamps) or len(set(stamps)) != len(stamps):
                failures.append("inconsistent view")
                return

    readers = [threading.Thread(target=reader, args=(k,)) for k in keys]
    writers = [threading.Thread(target=writer, args=(k,)) for k in keys]
    for t in readers + writers:
        t.start()
    for t in writers:
        t.join(30)
    stop.set()
    for t in readers:
        t.join(30)
    assert failures == []
    for key in keys:
        assert len(store.query_range(key, H0, H0 + timedelta(hours=48))) == 48


def test_gateway_publishing_from_many_threads_preserves_per_topic_order():
    broker = InProcessBroker()
    client = StubClient(broker)
    client.connect()
    gateway = Gateway(client)
    received: dict[str, list[float]] = {}
    lock = threading.Lock()

    def on_message(message):
        body = json.loads(message.payload)
        with lock:
            received.setdefault(message.topic, []).append(body["value"])

    broker.subscribe("aq/#", on_message)

    def publisher(installation_id):
        for n in range(200):
            point = SeriesPoint(H0 + timedelta(hours=n % 24), float(n))
            gateway.publish_measurement(installation_id, Parameter.PM25, point)

    threads = [threading.Thread(target=publisher, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(30)

    assert set(received) == {f"aq/{i}/pm25" for i in range(4)}
    for values in received.values():
        assert values == sorted(values)  # per-topic order preserved
        assert len(values) == 200


def test_edge_cache_concurrent_updates_and_reads():
    from aircast.broker import TopicMessage
    from aircast.edge import EdgeCache, serve_request

    cache = EdgeCache()
    stop = threading.Event()
    failures = []

    def updater(installation_id):
        for n in range(500):
            payload = json.dumps({"ts": "2021-03-01T00:00:00Z", "value": float(n)}).encode()
            cache.apply(TopicMessage(f"aq/{installation_id}/pm25", payload))

    def requester():
        while not stop.is_set():
            status, body = serve_request(cache, "/current", {"installation": "1"})
            if status != 200:
                failures.append(f"status {status}")
                return
            if body and not isinstance(body.get("pm25", {}).get("value", 0.0), float):
                failures.append("torn payload")
                return

    updaters = [threading.Thread(target=updater, args=(i,)) for i in range(3)]
    reader = threading.Thread(target=requester)
    reader.start()
    for t in updaters:
        t.start()
    for t in updaters:
        t.join(30)
    stop.set()
    reader.join(30)
    assert failures == []
    status, body = serve_request(cache, "/current", {"installation": "1"})
    assert status == 200 and body["pm25"]["value"] == 499.0
