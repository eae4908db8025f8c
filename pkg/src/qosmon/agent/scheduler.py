"""Battery scheduling: fixed-interval start times with no drift accumulation.

Start times are scheduled absolutely (start0 + k * interval) rather than
relative to battery completion, so per-cycle work does not push the
schedule.  Uploads run only in the idle gap between batteries.
"""

from __future__ import annotations

import logging
from typing import Callable

from ..clock import Clock

logger = logging.getLogger(__name__)


def run_schedule(
    clock: Clock,
    interval_ms: float,
    run_cycle: Callable[[int], None],
    upload: Callable[[], None] | None = None,
    cycles: int | None = None,
    on_start: Callable[[int, float], None] | None = None,
) -> None:
    """Run batteries at fixed intervals.

    ``run_cycle(k)`` executes battery k; ``upload()`` runs after each
    battery while the schedule is idle.  ``cycles`` bounds the loop (None
    = forever).  ``on_start`` observes actual start times (for drift
    checks).
    """
    start0 = clock.monotonic_ms()
    k = 0
    while cycles is None or k < cycles:
        target = start0 + k * interval_ms
        now = clock.monotonic_ms()
        if target > now:
            clock.sleep(target - now)
        if on_start is not None:
            on_start(k, clock.monotonic_ms())
        try:
            run_cycle(k)
        except Exception:
            logger.exception("battery %d failed", k)
        if upload is not None:
            try:
                upload()
            except Exception:
                logger.exception("upload after battery %d failed", k)
        k += 1
