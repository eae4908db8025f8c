"""Traffic shaping model: token bucket with an exponential-doubling ramp.

The permitted instantaneous payload rate on a connection is

    rate(t) = min(limit, initial_rate * 2^(t / doubling_period))

where limit = raw_rate * (1 - overhead_frac), further clamped by an optional
hard cap.  Delivery times come from the closed-form integral of rate(t), so
virtual-clock transfers cost no per-byte work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_LN2 = math.log(2.0)


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Ramp:
    initial_rate_bps: float
    doubling_period_ms: float

    def __post_init__(self):
        if self.initial_rate_bps <= 0 or self.doubling_period_ms <= 0:
            raise ShapeError("ramp parameters must be positive")


@dataclass(frozen=True)
class RouteShape:
    """Shaping parameters for one client<->service route."""

    raw_rate_bps: float
    one_way_delay_ms: float = 0.0
    loss_prob: float = 0.0
    overhead_frac: float = 0.06
    ramp: Ramp | None = None
    cap_bps: float | None = None
    # Extension beyond the minimal shape: symmetric multiplicative spread on
    # per-connection transfer times, drawn from the seeded generator.  Zero
    # keeps transfers fully deterministic.
    jitter_frac: float = 0.0

    def __post_init__(self):
        if self.raw_rate_bps <= 0:
            raise ShapeError("raw_rate_bps must be positive")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ShapeError("loss_prob must be in [0, 1]")
        if not 0.0 <= self.overhead_frac < 1.0:
            raise ShapeError("overhead_frac must be in [0, 1)")
        if self.cap_bps is not None and self.cap_bps > self.raw_rate_bps:
            raise ShapeError("cap_bps must not exceed raw_rate_bps")
        if self.one_way_delay_ms < 0:
            raise ShapeError("one_way_delay_ms must be >= 0")
        if not 0.0 <= self.jitter_frac < 1.0:
            raise ShapeError("jitter_frac must be in [0, 1)")

    @property
    def ceiling_bps(self) -> float:
        """Effective payload ceiling: raw rate less protocol overhead."""
        limit = self.raw_rate_bps * (1.0 - self.overhead_frac)
        if self.cap_bps is not None:
            limit = min(limit, self.cap_bps)
        return limit


def ramp_rate(shape: RouteShape, elapsed_ms_since_connect: float) -> float:
    """Permitted instantaneous rate at a given connection age."""
    limit = shape.ceiling_bps
    if shape.ramp is None:
        return limit
    r = shape.ramp
    return min(limit, r.initial_rate_bps
               * 2.0 ** (elapsed_ms_since_connect / r.doubling_period_ms))


def _ramp_knee(shape: RouteShape) -> tuple[float, float]:
    """(t*, bits delivered by t*) where the ramp meets the ceiling."""
    r = shape.ramp
    limit = shape.ceiling_bps
    if r.initial_rate_bps >= limit:
        return 0.0, 0.0
    t_star = r.doubling_period_ms * math.log2(limit / r.initial_rate_bps)
    scale = r.initial_rate_bps * r.doubling_period_ms / 1000.0 / _LN2
    bits_star = scale * (limit / r.initial_rate_bps - 1.0)
    return t_star, bits_star


def cumulative_bits(shape: RouteShape, t_ms: float) -> float:
    """Total payload bits deliverable in the first t_ms of a connection."""
    if t_ms <= 0:
        return 0.0
    limit = shape.ceiling_bps
    if shape.ramp is None:
        return limit * t_ms / 1000.0
    t_star, bits_star = _ramp_knee(shape)
    r = shape.ramp
    if t_ms <= t_star:
        scale = r.initial_rate_bps * r.doubling_period_ms / 1000.0 / _LN2
        return scale * (2.0 ** (t_ms / r.doubling_period_ms) - 1.0)
    return bits_star + limit * (t_ms - t_star) / 1000.0


def transfer_time_ms(shape: RouteShape, bits: float) -> float:
    """Time from connection start until ``bits`` payload bits are delivered.

    Inverse of cumulative_bits; exact for any chunking of the transfer.
    """
    if bits <= 0:
        return 0.0
    limit = shape.ceiling_bps
    if shape.ramp is None:
        return bits / limit * 1000.0
    t_star, bits_star = _ramp_knee(shape)
    r = shape.ramp
    if bits <= bits_star:
        scale = r.initial_rate_bps * r.doubling_period_ms / 1000.0 / _LN2
        return r.doubling_period_ms * math.log2(1.0 + bits / scale)
    return t_star + (bits - bits_star) / limit * 1000.0
