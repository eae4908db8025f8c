"""Probe transport abstraction.

Probes are written against these interfaces so the same code runs over the
real network or the in-process simnet harness.  The real backends live here;
the simnet backend is in qosmon.simnet.
"""

from __future__ import annotations

import os
import select
import socket
import struct
import time
from dataclasses import dataclass
from typing import Protocol


class TransportError(Exception):
    pass


class DnsError(TransportError):
    pass


class ConnectError(TransportError):
    pass


class ReadTimeoutError(TransportError):
    pass


class TruncatedError(TransportError):
    """Peer closed before the expected byte count arrived."""


class Stream(Protocol):
    """A bidirectional, ordered byte stream (TCP-like)."""

    def write(self, data: bytes) -> None: ...

    def readline(self, limit: int = 65536) -> bytes: ...

    def read_exact(self, n: int) -> bytes: ...

    def read_until_close(self) -> bytes: ...

    def close(self) -> None: ...


class Transport(Protocol):
    def open_stream(self, host: str, port: int, timeout_ms: float = 10000) -> Stream: ...


@dataclass(frozen=True)
class HopReply:
    """Reply to one TTL-limited probe."""

    address: str | None  # None = no reply within timeout
    rtt_ms: float | None
    reached: bool  # True when the reply came from the target itself


class ProbeTransport(Protocol):
    """Datagram-level probes: echo round trips and TTL-limited path probes."""

    def echo(self, target: str, sequence: int, payload_size: int,
             timeout_ms: float) -> float | None:
        """One echo probe; returns RTT in ms or None on loss.

        Raises DnsError when the target does not resolve.
        """
        ...

    def ttl_probe(self, target: str, ttl: int, timeout_ms: float) -> HopReply: ...

    @property
    def echo_backend(self) -> str: ...


# ---------------------------------------------------------------------------
# Real-network backends


class SocketStream:
    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buf = b""

    def write(self, data: bytes) -> None:
        self._sock.sendall(data)

    def _fill(self, n: int) -> None:
        try:
            chunk = self._sock.recv(max(n, 4096))
        except socket.timeout:
            raise ReadTimeoutError("read timed out") from None
        if not chunk:
            raise TruncatedError("connection closed by peer")
        self._buf += chunk

    def readline(self, limit: int = 65536) -> bytes:
        while b"\n" not in self._buf:
            if len(self._buf) > limit:
                raise TransportError("line too long")
            self._fill(1)
        line, _, self._buf = self._buf.partition(b"\n")
        return line + b"\n"

    def read_exact(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._fill(n - len(self._buf))
        data, self._buf = self._buf[:n], self._buf[n:]
        return data

    def read_until_close(self) -> bytes:
        while True:
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise ReadTimeoutError("read timed out") from None
            if not chunk:
                break
            self._buf += chunk
        data, self._buf = self._buf, b""
        return data

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class SocketTransport:
    """TCP streams over real sockets."""

    def open_stream(self, host: str, port: int, timeout_ms: float = 10000) -> Stream:
        try:
            infos = socket.getaddrinfo(host, port, type=socket.SOCK_STREAM)
        except socket.gaierror as exc:
            raise DnsError(f"cannot resolve {host}: {exc}") from None
        family, kind, proto, _, addr = infos[0]
        sock = socket.socket(family, kind, proto)
        sock.settimeout(timeout_ms / 1000.0)
        try:
            sock.connect(addr)
        except socket.timeout:
            sock.close()
            raise ConnectError(f"connect to {host}:{port} timed out") from None
        except OSError as exc:
            sock.close()
            raise ConnectError(f"connect to {host}:{port} failed: {exc}") from None
        return SocketStream(sock)


def _icmp_checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    total = (total >> 16) + (total & 0xFFFF)
    total += total >> 16
    return ~total & 0xFFFF


class RealProbeTransport:
    """ICMP echo where raw sockets are permitted, TCP connect otherwise.

    The backend actually used is exposed so series from different backends
    are never mixed in one comparison.
    """

    def __init__(self, tcp_port: int = 80):
        self._tcp_port = tcp_port
        self._backend = None
        self._ident = os.getpid() & 0xFFFF

    @property
    def echo_backend(self) -> str:
        return self._backend or "undetermined"

    def _resolve(self, target: str) -> str:
        try:
            return socket.gethostbyname(target)
        except socket.gaierror as exc:
            raise DnsError(f"cannot resolve {target}: {exc}") from None

    def echo(self, target: str, sequence: int, payload_size: int,
             timeout_ms: float) -> float | None:
        addr = self._resolve(target)
        if self._backend != "tcp_connect":
            try:
                rtt = self._icmp_echo(addr, sequence, payload_size, timeout_ms)
                self._backend = "icmp_echo"
                return rtt
            except PermissionError:
                self._backend = "tcp_connect"
        return self._tcp_echo(addr, timeout_ms)

    def _icmp_echo(self, addr: str, sequence: int, payload_size: int,
                   timeout_ms: float) -> float | None:
        sock = socket.socket(socket.AF_INET, socket.SOCK_RAW,
                             socket.getprotobyname("icmp"))
        try:
            sock.settimeout(timeout_ms / 1000.0)
            payload = bytes((i & 0xFF) for i in range(payload_size))
            header = struct.pack("!BBHHH", 8, 0, 0, self._ident, sequence & 0xFFFF)
            checksum = _icmp_checksum(header + payload)
            packet = struct.pack("!BBHHH", 8, 0, checksum, self._ident,
                                 sequence & 0xFFFF) + payload
            start = time.monotonic()
            sock.sendto(packet, (addr, 0))
            deadline = start + timeout_ms / 1000.0
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                ready, _, _ = select.select([sock], [], [], remaining)
                if not ready:
                    return None
                data, src = sock.recvfrom(65535)
                rtt = (time.monotonic() - start) * 1000.0
                icmp = data[20:]
                if len(icmp) >= 8:
                    typ, _, _, ident, seq = struct.unpack("!BBHHH", icmp[:8])
                    if typ == 0 and ident == self._ident and seq == sequence & 0xFFFF:
                        return rtt
        finally:
            sock.close()

    def _tcp_echo(self, addr: str, timeout_ms: float) -> float | None:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.settimeout(timeout_ms / 1000.0)
        start = time.monotonic()
        try:
            sock.connect((addr, self._tcp_port))
            return (time.monotonic() - start) * 1000.0
        except (socket.timeout, OSError):
            return None
        finally:
            sock.close()

    def ttl_probe(self, target: str, ttl: int, timeout_ms: float) -> HopReply:
        addr = self._resolve(target)
        try:
            return self._udp_ttl_probe(addr, ttl, timeout_ms)
        except PermissionError:
            # Without raw-socket privileges intermediate hops are invisible;
            # report the probe as unanswered rather than fabricating a path.
            return HopReply(address=None, rtt_ms=None, reached=False)

    def _udp_ttl_probe(self, addr: str, ttl: int, timeout_ms: float) -> HopReply:
        recv = socket.socket(socket.AF_INET, socket.SOCK_RAW,
                             socket.getprotobyname("icmp"))
        send = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            recv.settimeout(timeout_ms / 1000.0)
            send.setsockopt(socket.IPPROTO_IP, socket.IP_TTL, ttl)
            start = time.monotonic()
            send.sendto(b"", (addr, 33434 + ttl))
            try:
                data, src = recv.recvfrom(65535)
            except socket.timeout:
                return HopReply(address=None, rtt_ms=None, reached=False)
            rtt = (time.monotonic() - start) * 1000.0
            hop_addr = src[0]
            icmp_type = data[20] if len(data) > 20 else None
            reached = hop_addr == addr or icmp_type == 3  # port unreachable
            return HopReply(address=hop_addr, rtt_ms=rtt, reached=reached)
        finally:
            recv.close()
            send.close()
