"""Clock abstraction: wall time for timestamps, monotonic time for durations.

All measurement code takes a Clock so tests can substitute a virtual clock
and run shaped transfers instantly.
"""

from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def monotonic_ms(self) -> float:
        """Monotonic milliseconds; only differences are meaningful."""
        ...

    def wall_ms(self) -> int:
        """UTC wall-clock milliseconds since the epoch."""
        ...

    def sleep(self, ms: float) -> None:
        ...


class SystemClock:
    def monotonic_ms(self) -> float:
        return time.monotonic() * 1000.0

    def wall_ms(self) -> int:
        return int(time.time() * 1000)

    def sleep(self, ms: float) -> None:
        if ms > 0:
            time.sleep(ms / 1000.0)


class VirtualClock:
    """Deterministic clock that advances only when told to."""

    def __init__(self, start_wall_ms: int = 1_000_000_000_000):
        self._now = 0.0
        self._wall_base = start_wall_ms

    def monotonic_ms(self) -> float:
        return self._now

    def wall_ms(self) -> int:
        return self._wall_base + int(self._now)

    def sleep(self, ms: float) -> None:
        if ms > 0:
            self._now += ms

    def advance_to(self, t_ms: float) -> None:
        if t_ms > self._now:
            self._now = t_ms
