"""Bus semantics: FIFO delivery, periodic cadence, tie-breaks, determinism."""

from __future__ import annotations

import hashlib
import random
from fractions import Fraction

import pytest

from llmdirector.reactor import Reactor, ReactorError


def test_fifo_delivery_in_publication_order():
    bus = Reactor()
    got = []
    bus.subscribe("ball.observation", got.append)
    for i in range(3):
        bus.publish("ball.observation", i)
    assert got == [0, 1, 2]


def test_no_publisher_means_handler_never_invoked():
    bus = Reactor()
    got = []
    bus.subscribe("quiet.topic", got.append)
    bus.step(10.0)
    assert got == []


def test_two_handlers_invoked_in_registration_order_per_message():
    bus = Reactor()
    calls = []
    bus.subscribe("t", lambda m: calls.append(("a", m)))
    bus.subscribe("t", lambda m: calls.append(("b", m)))
    bus.publish("t", 1)
    bus.publish("t", 2)
    assert calls == [("a", 1), ("b", 1), ("a", 2), ("b", 2)]


def test_publish_returns_subscriber_count():
    bus = Reactor()
    bus.subscribe("goal.text", lambda m: None)
    assert bus.publish("goal.text", "Find the ball") == 1
    assert bus.publish("nobody.listens", "x") == 0


def test_interleaved_topics_preserve_per_topic_order():
    # sequence-number oracle under a fuzzed interleaving
    rng = random.Random(7)
    bus = Reactor()
    seen: dict[str, list[int]] = {"a": [], "b": []}
    bus.subscribe("a", seen["a"].append)
    bus.subscribe("b", seen["b"].append)
    sent: dict[str, list[int]] = {"a": [], "b": []}
    for seq in range(200):
        topic = rng.choice(["a", "b"])
        sent[topic].append(seq)
        bus.publish(topic, seq)
    assert seen == sent


def test_publications_from_handlers_are_queued_not_nested():
    bus = Reactor()
    order = []

    def outer(m):
        order.append("outer-start")
        bus.publish("inner", m)
        order.append("outer-end")

    bus.subscribe("outer", outer)
    bus.subscribe("inner", lambda m: order.append("inner"))
    bus.publish("outer", 1)
    bus.step(0)
    assert order == ["outer-start", "outer-end", "inner"]


def test_periodic_two_seconds_over_ten_seconds_fires_five_times():
    bus = Reactor()
    fires = []
    bus.schedule_periodic(2.0, fires.append)
    bus.step(10.0)
    assert fires == [2.0, 4.0, 6.0, 8.0, 10.0]


def test_periodic_ninety_hertz_over_one_second_fires_ninety_times():
    bus = Reactor()
    count = [0]
    bus.schedule_periodic(Fraction(1, 90), lambda now: count.__setitem__(0, count[0] + 1))
    bus.step(1.0)
    assert count[0] == 90


def test_non_positive_interval_rejected():
    bus = Reactor()
    with pytest.raises(ReactorError):
        bus.schedule_periodic(0, lambda now: None)
    with pytest.raises(ReactorError):
        bus.schedule_periodic(-1.0, lambda now: None)


def test_step_zero_with_nothing_queued_returns_zero():
    bus = Reactor()
    assert bus.step(0) == 0


def test_same_instant_timers_fire_in_registration_order():
    bus = Reactor()
    order = []
    bus.schedule_periodic(2.0, lambda now: order.append("first"))
    bus.schedule_periodic(1.0, lambda now: order.append("second"))
    bus.step(2.0)
    # at t=2 both are due; the earlier-registered reaction wins the tie
    assert order == ["second", "first", "second"]


def test_step_rejected_in_wall_mode():
    bus = Reactor(mode="wall")
    with pytest.raises(ReactorError):
        bus.step(1.0)


def test_run_rejected_in_simulated_mode():
    bus = Reactor()
    with pytest.raises(ReactorError):
        bus.run(0.1)


def test_time_never_decreases():
    bus = Reactor()
    bus.step(5.0)
    with pytest.raises(ReactorError):
        bus.step(4.0)


def test_identical_schedules_produce_identical_traces():
    def build_and_run() -> str:
        bus = Reactor(trace=True)
        results = []
        bus.subscribe("obs", results.append)
        bus.schedule_periodic(Fraction(1, 3), lambda now: bus.publish("obs", now))
        bus.schedule_periodic(Fraction(1, 2), lambda now: results.append(("timer", now)))
        bus.step(7.0)
        return hashlib.sha256("\n".join(bus.trace).encode()).hexdigest()

    assert build_and_run() == build_and_run()


def test_delivered_count_equals_subscribers_at_publication_time():
    bus = Reactor()
    bus.subscribe("t", lambda m: None)
    bus.subscribe("t", lambda m: None)
    assert bus.publish("t", "x") == 2


def test_cancel_stops_future_firings():
    bus = Reactor()
    fires = []
    reaction = bus.schedule_periodic(1.0, fires.append)
    bus.step(3.0)
    bus.cancel(reaction)
    bus.step(6.0)
    assert fires == [1.0, 2.0, 3.0]


def test_inbox_drained_between_reactions():
    bus = Reactor()
    order = []
    bus.post(lambda: order.append("inbox"))
    bus.schedule_periodic(1.0, lambda now: order.append("timer"))
    bus.step(1.0)
    assert order == ["inbox", "timer"]


def test_empty_topic_rejected():
    bus = Reactor()
    with pytest.raises(ReactorError):
        bus.subscribe("", lambda m: None)


def test_wall_clock_periodic_best_effort():
    bus = Reactor(mode="wall")
    fires = []
    bus.schedule_periodic(0.05, fires.append)
    bus.run(duration=0.35)
    assert 4 <= len(fires) <= 8
