"""Clock abstraction so protocol timelines can run faster than wall time.

All time-dependent components (heartbeats, sweep dwells, token expiry,
usage accounting) read time through a Clock. The default scale of 1.0 is
plain wall time; a scale of N makes N seconds of protocol time pass per
wall second without changing any protocol constant.
"""

from __future__ import annotations

import asyncio
import time


class Clock:
    """Monotonic seconds, optionally compressed by ``time_scale``."""

    def __init__(self, time_scale: float = 1.0):
        if time_scale <= 0:
            raise ValueError("time_scale must be positive")
        self.time_scale = time_scale
        self._t0 = time.monotonic()
        self._wall0 = time.time()

    def now(self) -> float:
        """Seconds of protocol time since the clock was created."""
        return (time.monotonic() - self._t0) * self.time_scale

    def wall(self) -> float:
        """Protocol-time unix timestamp (for records and statements)."""
        return self._wall0 + self.now()

    def now_ms(self) -> int:
        return int(self.wall() * 1000)

    async def sleep(self, seconds: float) -> None:
        """Sleep for ``seconds`` of protocol time."""
        if seconds > 0:
            await asyncio.sleep(seconds / self.time_scale)

    def sleep_blocking(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds / self.time_scale)
