"""Event scheduling on virtual or wall-clock time.

Tests drive a :class:`VirtualClock` so network delays, resend timers, and
scene-load delays are deterministic and instant.  The live binaries use
:class:`WallClock`, whose due events are fired from the owner's main loop.
"""

from __future__ import annotations

import heapq
import itertools
import time
from typing import Callable


class ClockRegression(Exception):
    """Raised when a clock is asked to move backwards."""


class _Scheduler:
    """Shared heap of (time, insertion-seq, callback) events."""

    def __init__(self) -> None:
        self._heap: list[tuple[float, int, int]] = []
        self._callbacks: dict[int, Callable[[], None]] = {}
        self._seq = itertools.count()

    def schedule(self, at_ms: float, fn: Callable[[], None]) -> int:
        """Register ``fn`` to fire at ``at_ms`` (clamped to now). Returns a handle."""
        handle = next(self._seq)
        at_ms = max(at_ms, self.now_ms())
        heapq.heappush(self._heap, (at_ms, handle, handle))
        self._callbacks[handle] = fn
        return handle

    def cancel(self, handle: int) -> None:
        self._callbacks.pop(handle, None)

    def now_ms(self) -> float:
        raise NotImplementedError

    def schedule_in(self, delay_ms: float, fn: Callable[[], None]) -> int:
        return self.schedule(self.now_ms() + delay_ms, fn)

    def _fire_due(self, until_ms: float) -> int:
        """Fire every pending event with time <= until_ms, in (time, seq) order."""
        fired = 0
        while self._heap and self._heap[0][0] <= until_ms:
            at, _, handle = heapq.heappop(self._heap)
            fn = self._callbacks.pop(handle, None)
            if fn is None:  # cancelled
                continue
            self._on_fire(at)
            fn()
            fired += 1
        return fired

    def _on_fire(self, at_ms: float) -> None:
        pass

    def pending(self) -> int:
        return len(self._callbacks)

    def next_event_ms(self) -> float | None:
        while self._heap and self._heap[0][2] not in self._callbacks:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None


class VirtualClock(_Scheduler):
    """Deterministic manually-advanced clock for tests and scripted runs."""

    def __init__(self, start_ms: float = 0.0) -> None:
        super().__init__()
        self._now = float(start_ms)

    def now_ms(self) -> float:
        return self._now

    def _on_fire(self, at_ms: float) -> None:
        self._now = max(self._now, at_ms)

    def advance(self, until_ms: float) -> int:
        """Advance to ``until_ms``, firing all events due on the way."""
        if until_ms < self._now:
            raise ClockRegression(f"advance to {until_ms} < now {self._now}")
        fired = self._fire_due(until_ms)
        self._now = until_ms
        return fired

    def advance_by(self, delta_ms: float) -> int:
        return self.advance(self._now + delta_ms)

    def advance_to_next(self) -> bool:
        """Jump to the next scheduled event, if any. Returns False when idle."""
        nxt = self.next_event_ms()
        if nxt is None:
            return False
        self.advance(nxt)
        return True

    def run_until_idle(self, limit_ms: float) -> None:
        """Advance until no events remain or the limit is reached."""
        while True:
            nxt = self.next_event_ms()
            if nxt is None or nxt > limit_ms:
                break
            self.advance(nxt)
        if limit_ms > self._now:
            self.advance(limit_ms)


class WallClock(_Scheduler):
    """Monotonic wall-clock; the owning main loop calls ``run_due`` each tick."""

    def __init__(self) -> None:
        super().__init__()
        self._epoch = time.monotonic()

    def now_ms(self) -> float:
        return (time.monotonic() - self._epoch) * 1000.0

    def run_due(self) -> int:
        return self._fire_due(self.now_ms())


def wall_time_ms() -> int:
    """Milliseconds since the Unix epoch, for envelope timestamps."""
    return int(time.time() * 1000)
