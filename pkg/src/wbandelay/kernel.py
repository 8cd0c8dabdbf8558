"""Deterministic discrete-event core: integer-tick clock, event heap, seeded streams.

Time is kept internally as integer nanosecond ticks so that event ordering
never depends on floating-point rounding. Every public interface takes and
returns seconds.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from typing import Any, Callable

TICKS_PER_SECOND = 1_000_000_000

EVENT_KINDS = (
    "packet-arrival",
    "channel-sense",
    "backoff-expiry",
    "ack-timeout",
    "service-complete",
    "stat-sample",
    "tx-end",
)


class SchedulingError(RuntimeError):
    """An event was scheduled before the current clock."""


def to_ticks(seconds: float) -> int:
    if seconds < 0:
        raise ValueError(f"negative time {seconds!r}")
    return round(seconds * TICKS_PER_SECOND)


def to_seconds(ticks: int) -> float:
    return ticks / TICKS_PER_SECOND


class Event:
    """A scheduled callback. Ordered by ``(fire_at, seq)``."""

    __slots__ = ("fire_at", "seq", "target", "kind", "action", "args", "cancelled")

    def __init__(self, fire_at: int, seq: int, target: str, kind: str,
                 action: Callable[..., Any], args: tuple = ()):
        self.fire_at = fire_at
        self.seq = seq
        self.target = target
        self.kind = kind
        self.action = action
        self.args = args
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    @property
    def time(self) -> float:
        return to_seconds(self.fire_at)

    def __repr__(self) -> str:
        return f"Event(t={self.time:.9f}, seq={self.seq}, target={self.target!r}, kind={self.kind!r})"


def stream_seed(seed: int, stream_id: str) -> int:
    """Mix a global seed and a stream name into a 64-bit stream seed.

    BLAKE2b over ``"<seed>/<stream_id>"``, first 8 bytes little-endian.
    Adding a stream never changes the seed of another one.
    """
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    digest = hashlib.blake2b(f"{seed}/{stream_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream(random.Random):
    """Per-node Mersenne Twister stream keyed by ``(seed, stream_id)``."""

    def __new__(cls, seed: int, stream_id: str):
        return super().__new__(cls, stream_seed(seed, stream_id))

    def __init__(self, seed: int, stream_id: str):
        self.root_seed = seed
        self.stream_id = stream_id
        super().__init__(stream_seed(seed, stream_id))


def draw_uniform_slots(rng: random.Random, be: int) -> int:
    """Uniform backoff slot count in ``[0, 2**be - 1]``."""
    if be < 0:
        raise ValueError(f"backoff exponent must be >= 0, got {be}")
    if be == 0:
        return 0
    return rng.getrandbits(be)


class Kernel:
    """Single-threaded event loop.

    ``flush_interval`` is the number of processed events between calls to
    the registered flush hooks (5000 by default, the update interval used for
    statistics sampling). A final flush always runs at the end of
    :meth:`run_until`.
    """

    def __init__(self, seed: int = 0, flush_interval: int = 5000, trace: bool = False):
        if flush_interval <= 0:
            raise ValueError("flush_interval must be positive")
        self.seed = seed
        self.flush_interval = flush_interval
        self.now_ticks = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._processed = 0
        self._streams: dict[str, RngStream] = {}
        self._flush_hooks: list[Callable[[int], None]] = []
        self.trace: list[tuple[int, int, str, str]] | None = [] if trace else None

    @property
    def now(self) -> float:
        return to_seconds(self.now_ticks)

    @property
    def pending(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)

    @property
    def processed(self) -> int:
        return self._processed

    def stream(self, stream_id: str) -> RngStream:
        rng = self._streams.get(stream_id)
        if rng is None:
            rng = self._streams[stream_id] = RngStream(self.seed, stream_id)
        return rng

    def on_flush(self, hook: Callable[[int], None]) -> None:
        self._flush_hooks.append(hook)

    def schedule_at(self, fire_at: int, target: str, kind: str,
                    action: Callable[..., Any], *args: Any) -> Event:
        """Schedule ``action(*args)`` at absolute tick ``fire_at``."""
        if fire_at < self.now_ticks:
            raise SchedulingError(
                f"cannot schedule {kind!r} for {target!r} at tick {fire_at}; "
                f"clock is at tick {self.now_ticks}")
        ev = Event(fire_at, self._seq, target, kind, action, args)
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, ev.seq, ev))
        return ev

    def schedule_in(self, delay: int, target: str, kind: str,
                    action: Callable[..., Any], *args: Any) -> Event:
        """Schedule ``action(*args)`` ``delay`` ticks from now."""
        return self.schedule_at(self.now_ticks + delay, target, kind, action, *args)

    def schedule(self, event: Event) -> Event:
        """Insert a pre-built event, assigning its sequence number."""
        if event.fire_at < self.now_ticks:
            raise SchedulingError(
                f"cannot schedule {event.kind!r} at tick {event.fire_at}; "
                f"clock is at tick {self.now_ticks}")
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (event.fire_at, event.seq, event))
        return event

    def step(self) -> Event | None:
        """Pop and fire the next live event, or return None if none remain."""
        heap = self._heap
        while heap:
            _, _, ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self._fire(ev)
            return ev
        return None

    def _fire(self, ev: Event) -> None:
        self.now_ticks = ev.fire_at
        if self.trace is not None:
            self.trace.append((ev.fire_at, ev.seq, ev.target, ev.kind))
        ev.action(*ev.args)
        self._processed += 1
        if self._processed % self.flush_interval == 0:
            self._flush()

    def _flush(self) -> None:
        for hook in self._flush_hooks:
            hook(self.now_ticks)

    def run_until(self, end: float) -> int:
        """Process every event with ``fire_at <= end``; return how many fired.

        The clock is left at ``end`` afterwards.
        """
        end_ticks = to_ticks(end)
        if end_ticks < self.now_ticks:
            raise SchedulingError(f"run_until({end}) is before the current clock {self.now}")
        heap = self._heap
        count = 0
        while heap and heap[0][0] <= end_ticks:
            _, _, ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self._fire(ev)
            count += 1
        self.now_ticks = end_ticks
        self._flush()
        return count
