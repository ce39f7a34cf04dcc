"""Deterministic publish/subscribe bus with periodic timers.

Two clock modes: simulated time, advanced explicitly through ``step()`` and
used by every reproducible trial, and wall-clock mode for interactive
sessions. Dispatch is strictly serialized: at most one reaction executes at
a time, and publications made from inside a handler are queued rather than
nested. External threads feed work in through a locked inbox that is
drained between reactions.

Event ordering is total and reproducible: every queued item is keyed by
(due time, tie bucket, registration/enqueue order). Due times are exact
rationals, so periodic timers never drift; pass ``Fraction(1, 90)`` rather
than ``1 / 90`` when an exact cadence matters.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable

Handler = Callable[[Any], None]

# Tie buckets: timers ordered by reaction registration, then deliveries in
# enqueue (publication) order.
_TIMERS = 0
_DELIVERIES = 1


class ReactorError(RuntimeError):
    """Raised on misuse of the bus (bad interval, wrong mode, duplicates)."""


@dataclass
class Reaction:
    """Handle for a subscription or timer registered on a bus."""

    id: int
    kind: str  # "topic" | "periodic" | "once"
    callback: Handler
    topic: str | None = None
    interval: Fraction | None = None
    start: Fraction = Fraction(0)
    fires: int = 0
    active: bool = True


def _as_fraction(value: float | int | Fraction) -> Fraction:
    if isinstance(value, Fraction):
        return value
    return Fraction(value)


class Reactor:
    """Serialized message bus with a single totally-ordered dispatch queue."""

    def __init__(self, mode: str = "simulated", trace: bool = False) -> None:
        if mode not in ("simulated", "wall"):
            raise ReactorError(f"unknown clock mode: {mode!r}")
        self.mode = mode
        self._now = Fraction(0)
        self._wall_epoch = time.monotonic()
        self._queue: list[tuple[Fraction, int, int, int, tuple]] = []
        self._seq = itertools.count()
        self._subscribers: dict[str, list[Reaction]] = defaultdict(list)
        self._reactions: dict[int, Reaction] = {}
        self._next_id = itertools.count(1)
        self._dispatching = False
        self._stopped = False
        self._inbox: deque[Callable[[], None]] = deque()
        self._inbox_lock = threading.Lock()
        self._wakeup = threading.Event()
        self.trace: list[str] | None = [] if trace else None

    # ------------------------------------------------------------------
    # clock

    @property
    def now(self) -> float:
        return float(self._now_frac())

    def _now_frac(self) -> Fraction:
        if self.mode == "wall":
            return Fraction(time.monotonic() - self._wall_epoch)
        return self._now

    @property
    def stopped(self) -> bool:
        return self._stopped

    def stop(self) -> None:
        """Ask the dispatch loop to exit after the current reaction."""
        self._stopped = True
        self._wakeup.set()

    # ------------------------------------------------------------------
    # registration

    def _register(self, reaction: Reaction) -> Reaction:
        if reaction.id in self._reactions:
            raise ReactorError(f"duplicate reaction handle {reaction.id}")
        self._reactions[reaction.id] = reaction
        return reaction

    def subscribe(self, topic: str, handler: Handler) -> Reaction:
        """Register ``handler`` for every future publication on ``topic``."""
        if not topic or not isinstance(topic, str):
            raise ReactorError("topic must be a non-empty string")
        reaction = self._register(
            Reaction(id=next(self._next_id), kind="topic", callback=handler, topic=topic)
        )
        self._subscribers[topic].append(reaction)
        return reaction

    def schedule_periodic(self, interval: float | Fraction, handler: Handler) -> Reaction:
        """Fire ``handler(now)`` every ``interval`` seconds, starting one
        interval from now."""
        interval = _as_fraction(interval)
        if interval <= 0:
            raise ReactorError("periodic interval must be > 0")
        reaction = self._register(
            Reaction(
                id=next(self._next_id),
                kind="periodic",
                callback=handler,
                interval=interval,
                start=self._now_frac(),
            )
        )
        self._push(reaction.start + interval, _TIMERS, reaction.id, ("timer", reaction))
        return reaction

    def schedule_at(self, when: float | Fraction, handler: Handler) -> Reaction:
        """Fire ``handler(now)`` once at absolute time ``when``."""
        when = _as_fraction(when)
        if when < self._now_frac():
            raise ReactorError("cannot schedule in the past")
        reaction = self._register(
            Reaction(id=next(self._next_id), kind="once", callback=handler, start=when)
        )
        self._push(when, _TIMERS, reaction.id, ("timer", reaction))
        return reaction

    def cancel(self, reaction: Reaction) -> None:
        reaction.active = False

    # ------------------------------------------------------------------
    # publication

    def publish(self, topic: str, message: Any) -> int:
        """Queue ``message`` for every current subscriber of ``topic``.

        Returns the number of subscribers at publication time. Delivery
        preserves per-topic publication order; when called outside a
        handler, all due deliveries run before this returns.
        """
        snapshot = [r for r in self._subscribers.get(topic, ()) if r.active]
        if snapshot:
            self._push(
                self._now_frac(), _DELIVERIES, next(self._seq), ("deliver", topic, message, snapshot)
            )
            if not self._dispatching:
                self._drain_due()
        return len(snapshot)

    def post(self, fn: Callable[[], None]) -> None:
        """Thread-safe inbox for external inputs; drained between reactions."""
        with self._inbox_lock:
            self._inbox.append(fn)
        self._wakeup.set()

    # ------------------------------------------------------------------
    # dispatch

    def _push(self, due: Fraction, bucket: int, order: int, item: tuple) -> None:
        heapq.heappush(self._queue, (due, bucket, order, next(self._seq), item))

    def _trace(self, due: Fraction, label: str) -> None:
        if self.trace is not None:
            self.trace.append(f"{float(due):.9f} {label}")

    def _run_handler(self, fn: Handler, arg: Any) -> None:
        self._dispatching = True
        try:
            fn(arg)
        finally:
            self._dispatching = False

    def _execute(self, due: Fraction, item: tuple) -> int:
        executed = 0
        if item[0] == "deliver":
            _, topic, message, snapshot = item
            for reaction in snapshot:
                if not reaction.active:
                    continue
                self._trace(due, f"deliver {topic} -> r{reaction.id}")
                self._run_handler(reaction.callback, message)
                executed += 1
        else:
            _, reaction = item
            if reaction.active:
                self._trace(due, f"timer r{reaction.id} #{reaction.fires + 1}")
                self._run_handler(reaction.callback, float(due))
                executed += 1
                reaction.fires += 1
                if reaction.kind == "periodic" and reaction.active:
                    next_due = reaction.start + reaction.interval * (reaction.fires + 1)
                    self._push(next_due, _TIMERS, reaction.id, ("timer", reaction))
        return executed

    def _drain_inbox(self) -> int:
        executed = 0
        while True:
            with self._inbox_lock:
                if not self._inbox:
                    return executed
                fn = self._inbox.popleft()
            self._run_handler(lambda _: fn(), None)
            executed += 1

    def _drain_due(self) -> int:
        """Execute everything due at or before the current time."""
        executed = 0
        now = self._now_frac()
        while not self._stopped and self._queue and self._queue[0][0] <= now:
            due, _, _, _, item = heapq.heappop(self._queue)
            executed += self._execute(due, item)
        return executed

    def step(self, until: float | Fraction) -> int:
        """Advance simulated time to ``until``, executing every timer and
        queued delivery due on the way, in timestamp order with ties broken
        by registration order. Returns the executed reaction count."""
        if self.mode != "simulated":
            raise ReactorError("step() is only valid in simulated mode")
        until = _as_fraction(until)
        if until < self._now:
            raise ReactorError("time cannot decrease")
        executed = self._drain_inbox()
        while not self._stopped and self._queue and self._queue[0][0] <= until:
            due, _, _, _, item = heapq.heappop(self._queue)
            if due > self._now:
                self._now = due
            executed += self._execute(due, item)
            executed += self._drain_inbox()
        if not self._stopped and until > self._now:
            self._now = until
        return executed

    def run(self, duration: float | None = None) -> int:
        """Wall-clock loop: execute due items as real time passes.

        Best-effort cadence. Returns the executed reaction count; exits when
        ``duration`` elapses (if given) or ``stop()`` is called.
        """
        if self.mode != "wall":
            raise ReactorError("run() is only valid in wall-clock mode")
        deadline = None if duration is None else time.monotonic() + duration
        executed = 0
        while not self._stopped:
            executed += self._drain_inbox()
            now = self._now_frac()
            while not self._stopped and self._queue and self._queue[0][0] <= now:
                due, _, _, _, item = heapq.heappop(self._queue)
                executed += self._execute(due, item)
                executed += self._drain_inbox()
                now = self._now_frac()
            if deadline is not None and time.monotonic() >= deadline:
                break
            wait = 0.05
            if self._queue:
                wait = min(wait, max(0.0, float(self._queue[0][0] - now)))
            if deadline is not None:
                wait = min(wait, max(0.0, deadline - time.monotonic()))
            self._wakeup.wait(timeout=wait if wait > 0 else 0.001)
            self._wakeup.clear()
        return executed
