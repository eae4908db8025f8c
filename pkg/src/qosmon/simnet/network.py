"""The in-process emulated network.

A SimNet hosts named services (HTTP, SMTP, POP, NNTP, echo/trace) and
applies per-route shaping to every byte that moves between a client and a
service.  With a virtual clock, shaped transfers complete instantly in real
time while reporting physically consistent elapsed times.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from ..clock import Clock, VirtualClock
from ..transport import (
    ConnectError,
    DnsError,
    HopReply,
    ReadTimeoutError,
    TruncatedError,
)
from .content import GroupDef, filler_group_names
from .servers import (
    HttpSession,
    MailStore,
    NntpSession,
    PopSession,
    Session,
    SmtpSession,
)
from .shaping import RouteShape, transfer_time_ms

DEFAULT_SHAPE = RouteShape(raw_rate_bps=10_000_000, one_way_delay_ms=1.0)

STANDARD_PORTS = {"http": 80, "smtp": 25, "pop": 110, "nntp": 119}


class SimNetConfigError(ValueError):
    pass


@dataclass
class _Service:
    host: str
    port: int
    kind: str
    make_session: Callable[[], Session]
    down: bool = False


@dataclass
class _EchoHost:
    host: str
    # Cumulative one-way delay to each hop; address None = unresponsive hop.
    hops: list[tuple[str | None, float]] = field(default_factory=list)
    down: bool = False


class SimStream:
    """Client end of a shaped in-process connection."""

    def __init__(self, session: Session, shape: RouteShape, clock: Clock,
                 timeout_ms: float, time_scale: float):
        self._session = session
        self._shape = shape
        self._clock = clock
        self._timeout_ms = timeout_ms
        self._scale = time_scale
        # TCP-style handshake costs one round trip before data can flow.
        clock.sleep(2.0 * shape.one_way_delay_ms)
        self._t0 = clock.monotonic_ms()
        self._bits = 0.0
        self._out = session.initial()
        self._prop_pending_ms = shape.one_way_delay_ms if self._out else 0.0

    def _charge(self, nbytes: int) -> None:
        self._bits += 8.0 * nbytes
        target = self._t0 + transfer_time_ms(self._shape, self._bits) * self._scale
        now = self._clock.monotonic_ms()
        if target > now:
            self._clock.sleep(target - now)

    def write(self, data: bytes) -> None:
        self._charge(len(data))
        self._out += self._session.feed(data)
        self._prop_pending_ms = 2.0 * self._shape.one_way_delay_ms

    def _take(self, n: int) -> bytes:
        if self._prop_pending_ms:
            self._clock.sleep(self._prop_pending_ms)
            self._prop_pending_ms = 0.0
        data, self._out = self._out[:n], self._out[n:]
        self._charge(len(data))
        return data

    def readline(self, limit: int = 65536) -> bytes:
        idx = self._out.find(b"\n")
        if idx < 0:
            if self._session.closed:
                raise TruncatedError("connection closed by peer")
            self._clock.sleep(self._timeout_ms)
            raise ReadTimeoutError("no line from server")
        if idx + 1 > limit:
            raise ReadTimeoutError("line too long")
        return self._take(idx + 1)

    def read_exact(self, n: int) -> bytes:
        if len(self._out) < n:
            got = self._take(len(self._out))
            if self._session.closed:
                raise TruncatedError(
                    f"connection closed after {len(got)} of {n} bytes"
                )
            self._clock.sleep(self._timeout_ms)
            raise ReadTimeoutError(f"short read: {len(got)} of {n} bytes")
        return self._take(n)

    def read_until_close(self) -> bytes:
        data = self._take(len(self._out))
        if not self._session.closed:
            self._clock.sleep(self._timeout_ms)
            raise ReadTimeoutError("server never closed the connection")
        return data

    def close(self) -> None:
        self._session.closed = True


class SimNet:
    """Registry of services, routes, and shaping state."""

    def __init__(self, seed: int = 0, clock: Clock | None = None):
        self.seed = seed
        self.clock: Clock = clock if clock is not None else VirtualClock()
        self._services: dict[tuple[str, int], _Service] = {}
        self._echo_hosts: dict[str, _EchoHost] = {}
        self._routes: dict[tuple[str, str], RouteShape] = {}
        self.default_shape = DEFAULT_SHAPE
        self._shaping_rng = random.Random(f"{seed}:shaping")

    # -- topology -----------------------------------------------------------

    def add_http(self, host: str, resources: dict | None = None,
                 port: int = 80) -> dict:
        resources = resources if resources is not None else {}
        svc = _Service(host, port, "http",
                       lambda: HttpSession(resources, self.seed, host))
        self._services[(host, port)] = svc
        return resources

    def add_mail(self, host: str, accounts: dict[str, str],
                 smtp_port: int = 25, pop_port: int = 110) -> MailStore:
        store = MailStore(accounts=dict(accounts))
        self._services[(host, smtp_port)] = _Service(
            host, smtp_port, "smtp", lambda: SmtpSession(store))
        self._services[(host, pop_port)] = _Service(
            host, pop_port, "pop", lambda: PopSession(store))
        return store

    def add_nntp(self, host: str, groups: dict[str, GroupDef],
                 filler_count: int = 0, port: int = 119) -> None:
        filler = filler_group_names(filler_count)
        self._services[(host, port)] = _Service(
            host, port, "nntp",
            lambda: NntpSession(groups, filler, self.seed, host))

    def add_echo_host(self, host: str,
                      hops: list[tuple[str | None, float]] | None = None) -> None:
        """Register an echo/trace responder.

        ``hops`` lists (address, cumulative one-way delay ms) per hop, the
        last entry being the target itself.  Omitted: a single hop whose
        delay comes from the route shape.
        """
        self._echo_hosts[host] = _EchoHost(host, hops=list(hops or []))

    def set_route(self, client_id: str, host: str, shape: RouteShape) -> None:
        """Shape all traffic between a client and a host.

        client_id "*" matches any client.  Takes effect for new connections
        only; existing connections keep their shape.
        """
        self._routes[(client_id, host)] = shape

    def set_down(self, host: str, down: bool = True, port: int | None = None) -> None:
        found = False
        for (h, p), svc in self._services.items():
            if h == host and (port is None or p == port):
                svc.down = down
                found = True
        if host in self._echo_hosts and port is None:
            self._echo_hosts[host].down = down
            found = True
        if not found:
            raise SimNetConfigError(f"no service registered at {host}")

    def route_shape(self, client_id: str, host: str) -> RouteShape:
        for key in ((client_id, host), ("*", host)):
            if key in self._routes:
                return self._routes[key]
        return self.default_shape

    def known_host(self, host: str) -> bool:
        return host in self._echo_hosts or any(
            h == host for (h, _p) in self._services)

    # -- client binding -----------------------------------------------------

    def transport(self, client_id: str) -> "SimClient":
        return SimClient(self, client_id)

    def _time_scale(self, shape: RouteShape) -> float:
        if shape.jitter_frac <= 0:
            return 1.0
        return 1.0 + shape.jitter_frac * self._shaping_rng.uniform(-1.0, 1.0)

    def _lost(self, shape: RouteShape) -> bool:
        return shape.loss_prob > 0 and self._shaping_rng.random() < shape.loss_prob

    def open_stream(self, client_id: str, host: str, port: int,
                    timeout_ms: float) -> SimStream:
        svc = self._services.get((host, port))
        if svc is None:
            if self.known_host(host):
                raise ConnectError(f"{host}:{port}: connection refused")
            raise DnsError(f"cannot resolve {host}")
        if svc.down:
            self.clock.sleep(timeout_ms)
            raise ConnectError(f"connect to {host}:{port} timed out")
        shape = self.route_shape(client_id, host)
        return SimStream(svc.make_session(), shape, self.clock, timeout_ms,
                         self._time_scale(shape))

    def echo(self, client_id: str, target: str, payload_size: int,
             timeout_ms: float) -> float | None:
        if not self.known_host(target):
            raise DnsError(f"cannot resolve {target}")
        eh = self._echo_hosts.get(target)
        if eh is not None and eh.down:
            self.clock.sleep(timeout_ms)
            return None
        shape = self.route_shape(client_id, target)
        if self._lost(shape):
            self.clock.sleep(timeout_ms)
            return None
        # Round trip plus the (small) shaped cost of moving the probe payload.
        rtt = 2.0 * shape.one_way_delay_ms
        rtt += 2.0 * (payload_size * 8.0 / shape.ceiling_bps) * 1000.0
        rtt *= self._time_scale(shape)
        rtt = min(rtt, timeout_ms)
        self.clock.sleep(rtt)
        return rtt

    def ttl_probe(self, client_id: str, target: str, ttl: int,
                  timeout_ms: float) -> HopReply:
        if not self.known_host(target):
            raise DnsError(f"cannot resolve {target}")
        shape = self.route_shape(client_id, target)
        eh = self._echo_hosts.get(target)
        hops = eh.hops if eh is not None and eh.hops else \
            [(target, shape.one_way_delay_ms)]
        if (eh is not None and eh.down) or self._lost(shape):
            self.clock.sleep(timeout_ms)
            return HopReply(address=None, rtt_ms=None, reached=False)
        idx = min(ttl, len(hops)) - 1
        address, one_way = hops[idx]
        if address is None:
            self.clock.sleep(timeout_ms)
            return HopReply(address=None, rtt_ms=None, reached=False)
        rtt = 2.0 * one_way * self._time_scale(shape)
        rtt = min(rtt, timeout_ms)
        self.clock.sleep(rtt)
        return HopReply(address=address, rtt_ms=rtt,
                        reached=idx == len(hops) - 1)


class SimClient:
    """Transport + ProbeTransport view of a SimNet for one client id."""

    def __init__(self, net: SimNet, client_id: str):
        self._net = net
        self.client_id = client_id

    @property
    def clock(self) -> Clock:
        return self._net.clock

    @property
    def echo_backend(self) -> str:
        return "simnet"

    def open_stream(self, host: str, port: int, timeout_ms: float = 10000) -> SimStream:
        return self._net.open_stream(self.client_id, host, port, timeout_ms)

    def echo(self, target: str, sequence: int, payload_size: int,
             timeout_ms: float) -> float | None:
        return self._net.echo(self.client_id, target, payload_size, timeout_ms)

    def ttl_probe(self, target: str, ttl: int, timeout_ms: float) -> HopReply:
        return self._net.ttl_probe(self.client_id, target, ttl, timeout_ms)
