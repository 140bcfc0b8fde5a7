"""Deterministic discrete-event engine.

Time is kept internally as an integer count of nanoseconds so that event
ordering is exact; public helpers convert to and from seconds.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import random
import struct
from typing import Any, Callable, Iterable

NS_PER_S = 1_000_000_000

DEFAULT_STREAMS = ("mobility", "traffic", "mac-backoff", "topology", "routing")


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


def to_s(ns: int) -> float:
    return ns / NS_PER_S


class EventKind(enum.IntEnum):
    FRAME_ARRIVAL = 1
    TIMER_EXPIRY = 2
    WAYPOINT_REACHED = 3
    HELLO_DUE = 4
    METRIC_SAMPLE = 5
    TRAFFIC_SEND = 6


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


class Event:
    __slots__ = ("fire_ns", "sequence_id", "kind", "callback", "args", "cancelled")

    def __init__(self, fire_ns, sequence_id, kind, callback, args):
        self.fire_ns = fire_ns
        self.sequence_id = sequence_id
        self.kind = kind
        self.callback = callback
        self.args = args
        self.cancelled = False

    @property
    def fire_time(self) -> float:
        return to_s(self.fire_ns)

    def cancel(self) -> None:
        self.cancelled = True

    def __repr__(self):
        return f"Event(t={self.fire_time:.9f}, seq={self.sequence_id}, kind={self.kind.name})"


def _stream_seed(master_seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{master_seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Engine:
    """Single-threaded event queue with a clock and named random streams.

    Each stream label gets its own generator derived from the master seed,
    so draws made by one subsystem never shift another subsystem's sequence.
    """

    def __init__(self, seed: int = 0, streams: Iterable[str] = DEFAULT_STREAMS,
                 trace: bool = True):
        self.seed = seed
        self.now_ns = 0
        self._queue: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._streams = {label: random.Random(_stream_seed(seed, label)) for label in streams}
        self.fired = 0
        self._trace = hashlib.blake2b(digest_size=16) if trace else None
        self._pack = struct.Struct("<qqB").pack

    @property
    def now(self) -> float:
        return self.now_ns / NS_PER_S

    def schedule_ns(self, fire_ns: int, kind: EventKind, callback: Callable[..., Any],
                    *args) -> Event:
        if fire_ns < self.now_ns:
            raise SchedulingError(
                f"event {kind.name} at {fire_ns} ns is before clock {self.now_ns} ns")
        self._seq += 1
        event = Event(fire_ns, self._seq, kind, callback, args)
        heapq.heappush(self._queue, (fire_ns, self._seq, event))
        return event

    def schedule(self, fire_time: float, kind: EventKind, callback: Callable[..., Any],
                 *args) -> Event:
        return self.schedule_ns(to_ns(fire_time), kind, callback, *args)

    def after_ns(self, delay_ns: int, kind: EventKind, callback: Callable[..., Any],
                 *args) -> Event:
        return self.schedule_ns(self.now_ns + delay_ns, kind, callback, *args)

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._queue if not ev.cancelled)

    def run_until(self, end_time: float) -> float:
        """Fire every event with fire time <= end_time, then park the clock at end_time."""
        end_ns = to_ns(end_time)
        if end_ns < self.now_ns:
            raise SchedulingError("run_until target lies in the past")
        queue = self._queue
        pop = heapq.heappop
        trace = self._trace
        pack = self._pack
        while queue and queue[0][0] <= end_ns:
            fire_ns, seq, event = pop(queue)
            if event.cancelled:
                continue
            self.now_ns = fire_ns
            self.fired += 1
            if trace is not None:
                trace.update(pack(fire_ns, seq, event.kind))
            event.callback(*event.args)
        self.now_ns = end_ns
        return self.now

    def trace_digest(self) -> str:
        if self._trace is None:
            return ""
        return self._trace.hexdigest()

    def stream(self, label: str) -> random.Random:
        try:
            return self._streams[label]
        except KeyError:
            raise KeyError(f"unknown random stream {label!r}") from None

    def draw(self, label: str, distribution: str = "uniform", *params: float):
        """Draw one sample from a named stream.

        Supported distributions: ``uniform(a=0, b=1)``, ``randint(a, b)``
        (inclusive) and ``expovariate(rate)``.
        """
        rng = self.stream(label)
        if distribution == "uniform":
            if not params:
                return rng.random()
            a, b = params
            return a + (b - a) * rng.random()
        if distribution == "randint":
            a, b = params
            return rng.randint(int(a), int(b))
        if distribution == "expovariate":
            return rng.expovariate(params[0])
        raise ValueError(f"unsupported distribution {distribution!r}")
