import json
from datetime import datetime, timezone

import pytest

from aircast.broker import (
    Gateway,
    InProcessBroker,
    InvalidTopic,
    MessageKind,
    NotConnected,
    StubClient,
    TopicMessage,
    forecast_payload,
    measurement_payload,
    topic_for,
    topic_matches,
    validate_topic,
)
from aircast.domain import Parameter
from aircast.forecast import ForecastSet
from aircast.store import SeriesPoint

T0 = datetime(2021, 3, 1, 12, 0, tzinfo=timezone.utc)


class Collector:
    def __init__(self):
        self.messages = []

    def __call__(self, message):
        self.messages.append(message)

    @property
    def topics(self):
        return [m.topic for m in self.messages]


class TestTopicScheme:
    def test_measurement_topic(self):
        assert topic_for(7, Parameter.PM25, MessageKind.MEASUREMENT) == "aq/7/pm25"

    def test_forecast_topic(self):
        assert topic_for(7, Parameter.PM25, MessageKind.FORECAST) == "aq/7/pm25/forecast"

    def test_injective_over_valid_domain(self):
        topics = {
            topic_for(i, p, k)
            for i in (1, 2, 37)
            for p in Parameter
            for k in MessageKind
        }
        assert len(topics) == 3 * len(Parameter) * 2

    @pytest.mark.parametrize("bad", ["", "a/+/b", "a/#", "/a", "a/"])
    def test_invalid_published_topics(self, bad):
        with pytest.raises(InvalidTopic):
            validate_topic(bad)


class TestTopicMatching:
    @pytest.mark.parametrize(
        "pattern,topic,expected",
        [
            ("aq/7/pm25", "aq/7/pm25", True),
            ("aq/7/+", "aq/7/pm25", True),
            ("aq/7/+", "aq/7/pm25/forecast", False),
            ("aq/7/+", "aq/8/pm25", False),
            ("aq/#", "aq/7/pm25/forecast", True),
            ("aq/#", "aq", True),
            ("#", "anything/at/all", True),
            ("aq/+/pm25", "aq/12/pm25", True),
            ("aq/7/pm25", "aq/7/pm10", False),
        ],
    )
    def test_cases(self, pattern, topic, expected):
        assert topic_matches(pattern, topic) is expected


class TestInProcessBroker:
    def test_round_trip_byte_identical(self):
        broker = InProcessBroker()
        got = Collector()
        broker.subscribe("aq/7/pm25", got)
        payload = measurement_payload(SeriesPoint(T0, 12.5))
        broker.publish(TopicMessage("aq/7/pm25", payload, qos=1, retain=True))
        assert len(got.messages) == 1
        assert got.messages[0].payload == payload

    def test_late_subscriber_receives_retained(self):
        broker = InProcessBroker()
        payload = measurement_payload(SeriesPoint(T0, 12.5))
        broker.publish(TopicMessage("aq/7/pm25", payload, qos=1, retain=True))
        late = Collector()
        broker.subscribe("aq/7/pm25", late)
        assert late.messages[0].payload == payload

    def test_retain_overwrite_keeps_latest(self):
        broker = InProcessBroker()
        broker.publish(TopicMessage("aq/7/pm25", b"one", retain=True))
        broker.publish(TopicMessage("aq/7/pm25", b"two", retain=True))
        late = Collector()
        broker.subscribe("aq/7/pm25", late)
        assert [m.payload for m in late.messages] == [b"two"]

    def test_wildcard_filtering_by_installation(self):
        broker = InProcessBroker()
        got = Collector()
        broker.subscribe("aq/7/+", got)
        for installation in (7, 8):
            for parameter in (Parameter.PM25, Parameter.TEMPERATURE):
                topic = topic_for(installation, parameter, MessageKind.MEASUREMENT)
                broker.publish(TopicMessage(topic, b"x"))
        assert got.topics == ["aq/7/pm25", "aq/7/temperature"]

    def test_empty_retained_payload_clears(self):
        broker = InProcessBroker()
        broker.publish(TopicMessage("aq/7/pm25", b"one", retain=True))
        broker.publish(TopicMessage("aq/7/pm25", b"", retain=True))
        late = Collector()
        broker.subscribe("aq/7/pm25", late)
        assert late.messages == []


class TestGateway:
    def setup_method(self):
        self.broker = InProcessBroker()
        self.client = StubClient(self.broker)
        self.gateway = Gateway(self.client)

    def test_publish_measurement_payload(self):
        got = Collector()
        self.broker.subscribe("aq/7/pm25", got)
        self.client.connect()
        self.gateway.publish_measurement(7, Parameter.PM25, SeriesPoint(T0, 12.5))
        assert len(got.messages) == 1
        body = json.loads(got.messages[0].payload)
        assert body == {"ts": "2021-03-01T12:00:00Z", "value": 12.5}
        assert got.messages[0].qos == 1 and got.messages[0].retain

    def test_publish_forecast_payload(self):
        got = Collector()
        self.broker.subscribe("aq/7/pm25/forecast", got)
        self.client.connect()
        forecast = ForecastSet(T0, {1: 10.0, 2: 11.0, 3: 12.0}, "abc123")
        self.gateway.publish_forecast(7, Parameter.PM25, forecast)
        body = json.loads(got.messages[0].payload)
        assert body == {
            "base": "2021-03-01T12:00:00Z",
            "h1": 10.0,
            "h2": 11.0,
            "h3": 12.0,
            "model_id": "abc123",
        }

    def test_offline_publish_buffers_and_raises(self):
        with pytest.raises(NotConnected):
            self.gateway.publish_measurement(7, Parameter.PM25, SeriesPoint(T0, 1.0))
        assert self.gateway.buffered == 1

    def test_reconnect_redelivers_in_order(self):
        got = Collector()
        self.broker.subscribe("aq/7/+", got)
        for value in (1.0, 2.0, 3.0):
            with pytest.raises(NotConnected):
                self.gateway.publish_measurement(7, Parameter.PM25, SeriesPoint(T0, value))
        self.gateway.connect()
        values = [json.loads(m.payload)["value"] for m in got.messages]
        assert values == [1.0, 2.0, 3.0]
        assert self.gateway.buffered == 0

    def test_buffer_drops_oldest_beyond_limit(self):
        gateway = Gateway(self.client, buffer_limit=2)
        for value in (1.0, 2.0, 3.0):
            with pytest.raises(NotConnected):
                gateway.publish_measurement(7, Parameter.PM25, SeriesPoint(T0, value))
        got = Collector()
        self.broker.subscribe("aq/7/+", got)
        gateway.connect()
        assert [json.loads(m.payload)["value"] for m in got.messages] == [2.0, 3.0]

    def test_payload_encoding_is_canonical(self):
        a = forecast_payload(ForecastSet(T0, {1: 1.0, 2: 2.0, 3: 3.0}, "m"))
        b = forecast_payload(ForecastSet(T0, {3: 3.0, 2: 2.0, 1: 1.0}, "m"))
        assert a == b

    def test_resubscribe_after_reconnect_rewarms(self):
        self.client.connect()
        self.gateway.publish_measurement(7, Parameter.PM25, SeriesPoint(T0, 5.0))
        subscriber = StubClient(self.broker)
        got = Collector()
        subscriber.subscribe("aq/#", got)
        subscriber.connect()
        assert len(got.messages) == 1  # retained warm-up
        subscriber.disconnect()
        subscriber.connect()
        assert len(got.messages) == 2  # retained re-sent on clean re-subscribe
