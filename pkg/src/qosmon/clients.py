"""Minimal HTTP/1.1, POP3, SMTP and NNTP clients over the Stream interface.

Bodies are consumed in memory and never written to disk; callers keep only
timing and size metadata.  These clients implement just enough of each
protocol for the probe batteries.
"""

from __future__ import annotations

from dataclasses import dataclass
from urllib.parse import urlsplit

from .transport import Stream, Transport, TransportError

MAX_REDIRECTS = 5


class ProtocolError(TransportError):
    """The server answered, but not the way the protocol requires."""


class TooManyRedirectsError(ProtocolError):
    pass


@dataclass
class HttpResponse:
    status: int
    headers: dict[str, str]
    body: bytes
    final_url: str


def split_url(url: str) -> tuple[str, int, str]:
    parts = urlsplit(url)
    if parts.scheme not in ("http", ""):
        raise ProtocolError(f"unsupported scheme in {url!r}")
    host = parts.hostname or ""
    port = parts.port or 80
    path = parts.path or "/"
    if parts.query:
        path += "?" + parts.query
    return host, port, path


def _read_response(stream: Stream) -> tuple[int, dict[str, str], bytes]:
    status_line = stream.readline().decode("latin-1").strip()
    parts = status_line.split(" ", 2)
    if len(parts) < 2 or not parts[1].isdigit():
        raise ProtocolError(f"bad status line {status_line!r}")
    status = int(parts[1])
    headers: dict[str, str] = {}
    while True:
        line = stream.readline().decode("latin-1")
        if line in ("\r\n", "\n", ""):
            break
        name, _, value = line.partition(":")
        headers[name.strip().lower()] = value.strip()
    if "content-length" in headers:
        body = stream.read_exact(int(headers["content-length"]))
    elif headers.get("transfer-encoding", "").lower() == "chunked":
        chunks = []
        while True:
            size_line = stream.readline().decode("latin-1").strip()
            size = int(size_line.split(";")[0], 16)
            if size == 0:
                stream.readline()
                break
            chunks.append(stream.read_exact(size))
            stream.readline()  # trailing CRLF
        body = b"".join(chunks)
    else:
        body = stream.read_until_close()
    return status, headers, body


def http_get(transport: Transport, url: str, timeout_ms: float = 10000,
             max_redirects: int = MAX_REDIRECTS) -> HttpResponse:
    """GET with up to ``max_redirects`` redirects followed."""
    current = url
    for _ in range(max_redirects + 1):
        host, port, path = split_url(current)
        stream = transport.open_stream(host, port, timeout_ms)
        try:
            stream.write(
                f"GET {path} HTTP/1.1\r\nHost: {host}\r\n"
                f"User-Agent: qosmon\r\nConnection: close\r\n\r\n".encode()
            )
            status, headers, body = _read_response(stream)
        finally:
            stream.close()
        if status in (301, 302, 303, 307, 308) and "location" in headers:
            location = headers["location"]
            if "://" not in location:
                base = urlsplit(current)
                location = f"{base.scheme or 'http'}://{base.netloc}{location}"
            current = location
            continue
        return HttpResponse(status=status, headers=headers, body=body,
                            final_url=current)
    raise TooManyRedirectsError(f"more than {max_redirects} redirects from {url}")


class _LineClient:
    def __init__(self, stream: Stream):
        self.stream = stream

    def line(self) -> str:
        return self.stream.readline().decode("latin-1").rstrip("\r\n")

    def send(self, text: str) -> None:
        self.stream.write(text.encode() + b"\r\n")

    def close(self) -> None:
        self.stream.close()


class PopClient(_LineClient):
    def __init__(self, stream: Stream):
        super().__init__(stream)
        greeting = self.line()
        if not greeting.startswith("+OK"):
            raise ProtocolError(f"bad POP greeting {greeting!r}")

    def _expect_ok(self, context: str) -> str:
        reply = self.line()
        if not reply.startswith("+OK"):
            raise ProtocolError(f"{context}: {reply!r}")
        return reply

    def login(self, user: str, password: str) -> None:
        self.send(f"USER {user}")
        self._expect_ok("USER")
        self.send(f"PASS {password}")
        self._expect_ok("PASS")

    def list_messages(self) -> list[tuple[int, int]]:
        """(message number, size) pairs."""
        self.send("LIST")
        self._expect_ok("LIST")
        out = []
        while True:
            line = self.line()
            if line == ".":
                break
            num, _, size = line.partition(" ")
            out.append((int(num), int(size)))
        return out

    def top_headers(self, num: int) -> str:
        self.send(f"TOP {num} 0")
        self._expect_ok("TOP")
        lines = []
        while True:
            line = self.line()
            if line == ".":
                break
            lines.append(line)
        return "\n".join(lines)

    def retrieve(self, num: int) -> bytes:
        self.send(f"RETR {num}")
        reply = self._expect_ok("RETR")
        parts = reply.split()
        if len(parts) >= 2 and parts[1].isdigit():
            body = self.stream.read_exact(int(parts[1]))
            term = self.stream.read_exact(5)
            if term != b"\r\n.\r\n":
                raise ProtocolError("bad RETR terminator")
            return body
        # Octet count not advertised: fall back to dot-terminated read.
        chunks = []
        while True:
            line = self.stream.readline()
            if line in (b".\r\n", b".\n"):
                break
            chunks.append(line)
        return b"".join(chunks)

    def delete(self, num: int) -> None:
        self.send(f"DELE {num}")
        self._expect_ok("DELE")

    def quit(self) -> None:
        self.send("QUIT")
        try:
            self._expect_ok("QUIT")
        finally:
            self.close()


class SmtpClient(_LineClient):
    def __init__(self, stream: Stream):
        super().__init__(stream)
        greeting = self.line()
        if not greeting.startswith("220"):
            raise ProtocolError(f"bad SMTP greeting {greeting!r}")
        self.send("HELO qosmon")
        self._expect("250", "HELO")

    def _expect(self, code: str, context: str) -> str:
        reply = self.line()
        if not reply.startswith(code):
            raise ProtocolError(f"{context}: {reply!r}")
        return reply

    def send_message(self, sender: str, rcpt: str, message: bytes,
                     on_payload_start=None) -> None:
        """Send one message; ``on_payload_start`` fires just before the
        message payload goes on the wire (the upload timing point)."""
        self.send(f"MAIL FROM:<{sender}>")
        self._expect("250", "MAIL FROM")
        self.send(f"RCPT TO:<{rcpt}>")
        self._expect("250", "RCPT TO")
        self.send("DATA")
        self._expect("354", "DATA")
        if on_payload_start is not None:
            on_payload_start()
        self.stream.write(message + b"\r\n.\r\n")
        self._expect("250", "message acceptance")

    def quit(self) -> None:
        self.send("QUIT")
        try:
            self._expect("221", "QUIT")
        finally:
            self.close()


@dataclass(frozen=True)
class OverviewEntry:
    number: int
    subject: str
    size_bytes: int


class NntpClient(_LineClient):
    def __init__(self, stream: Stream):
        super().__init__(stream)
        greeting = self.line()
        if not greeting.startswith("200"):
            raise ProtocolError(f"bad NNTP greeting {greeting!r}")

    def _dot_block(self) -> tuple[list[str], int]:
        """Dot-terminated multiline block: (lines, raw byte count)."""
        lines = []
        nbytes = 0
        while True:
            raw = self.stream.readline()
            line = raw.decode("latin-1").rstrip("\r\n")
            if line == ".":
                break
            nbytes += len(raw)
            lines.append(line)
        return lines, nbytes

    def list_groups(self) -> tuple[list[str], int]:
        """Full group list: (group names, transferred byte count)."""
        self.send("LIST")
        reply = self.line()
        if not reply.startswith("215"):
            raise ProtocolError(f"LIST: {reply!r}")
        rows, nbytes = self._dot_block()
        return [row.split()[0] for row in rows if row.split()], nbytes

    def select_group(self, name: str) -> tuple[int, int, int]:
        """Returns (count, first, last)."""
        self.send(f"GROUP {name}")
        reply = self.line()
        if not reply.startswith("211"):
            raise ProtocolError(f"GROUP {name}: {reply!r}")
        _, count, first, last, *_ = reply.split()
        return int(count), int(first), int(last)

    def overview(self, first: int, last: int) -> tuple[list[OverviewEntry], int]:
        self.send(f"XOVER {first}-{last}")
        reply = self.line()
        if not reply.startswith("224"):
            raise ProtocolError(f"XOVER: {reply!r}")
        rows, nbytes = self._dot_block()
        out = []
        for row in rows:
            fields = row.split("\t")
            if len(fields) >= 7:
                out.append(OverviewEntry(number=int(fields[0]),
                                         subject=fields[1],
                                         size_bytes=int(fields[6])))
        return out, nbytes

    def body(self, number: int) -> bytes:
        self.send(f"BODY {number}")
        reply = self.line()
        if not reply.startswith("222"):
            raise ProtocolError(f"BODY {number}: {reply!r}")
        chunks = []
        while True:
            line = self.stream.readline()
            if line in (b".\r\n", b".\n"):
                break
            chunks.append(line)
        body = b"".join(chunks)
        return body[:-2] if body.endswith(b"\r\n") else body

    def quit(self) -> None:
        self.send("QUIT")
        try:
            self.line()
        finally:
            self.close()
