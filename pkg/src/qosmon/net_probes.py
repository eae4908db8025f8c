"""Low-level network probes: echo latency series, loss estimation, tracing.

Measured round trips include processing time at the end points; no attempt
is made to subtract it.  Probes run against any ProbeTransport, so the same
code serves the real network and the simnet harness.
"""

from __future__ import annotations

from dataclasses import dataclass

from .clock import Clock, SystemClock
from .records import (
    EchoProbeResult,
    Hop,
    InvalidMeasurementError,
    Outcome,
    PathTrace,
    RttSeries,
)
from .transport import DnsError, ProbeTransport


@dataclass(frozen=True)
class EchoConfig:
    target: str
    count: int = 10
    interval_ms: float = 1000.0
    timeout_ms: float = 2000.0
    payload_size: int = 64

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")


def echo_probe(transport: ProbeTransport, config: EchoConfig,
               clock: Clock | None = None) -> RttSeries:
    """Run one echo series: count probes, spaced by interval.

    A resolution failure yields a series with zero probes and a dns_failure
    outcome; total loss is a valid series with every probe lost.
    """
    clock = clock or SystemClock()
    probes: list[EchoProbeResult] = []
    for seq in range(config.count):
        if seq > 0:
            clock.sleep(config.interval_ms)
        try:
            rtt = transport.echo(config.target, seq, config.payload_size,
                                 config.timeout_ms)
        except DnsError:
            return RttSeries(target=config.target,
                             backend=transport.echo_backend,
                             probes=(), outcome=Outcome.DNS_FAILURE)
        probes.append(EchoProbeResult(sequence=seq, rtt_ms=rtt))
    return RttSeries(target=config.target, backend=transport.echo_backend,
                     probes=tuple(probes))


def loss_estimate(series: RttSeries) -> float:
    """Empirical loss frequency of the series, no smoothing.

    Echo probes can overestimate path loss (they are likelier to be dropped
    than ordinary traffic); callers comparing estimates should keep that in
    mind.
    """
    if not series.probes:
        raise InvalidMeasurementError("cannot estimate loss from an empty series")
    lost = sum(1 for p in series.probes if p.lost)
    return lost / len(series.probes)


def trace_path(transport: ProbeTransport, target: str, max_hops: int = 30,
               probes_per_hop: int = 3, timeout_ms: float = 2000.0) -> PathTrace:
    """Increasing-TTL path trace.

    Per-hop delay is reported as raw hop RTTs, never differenced between
    hops: forward and return paths may differ, and differencing produces
    negative artifacts.
    """
    hops: list[Hop] = []
    reached = False
    for ttl in range(1, max_hops + 1):
        address = None
        rtts: list[float] = []
        hop_reached = False
        for _ in range(probes_per_hop):
            try:
                reply = transport.ttl_probe(target, ttl, timeout_ms)
            except DnsError:
                return PathTrace(target=target, hops=tuple(hops), reached=False)
            if reply.address is not None:
                address = reply.address
                if reply.rtt_ms is not None:
                    rtts.append(reply.rtt_ms)
                hop_reached = hop_reached or reply.reached
        hops.append(Hop(ttl=ttl, address=address, rtts_ms=tuple(rtts)))
        if hop_reached:
            reached = True
            break
    return PathTrace(target=target, hops=tuple(hops), reached=reached)
