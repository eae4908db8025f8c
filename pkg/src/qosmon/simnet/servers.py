"""Protocol session state machines for the simnet services.

A session is a synchronous state machine: ``feed`` consumes raw client
bytes and returns whatever the server sends back.  Sessions know nothing
about time or shaping; the stream layer charges for every byte moved.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .content import FileDef, GroupDef, PageDef, RedirectDef, deterministic_bytes

CRLF = b"\r\n"

# Article/message body alphabet: printable, no CR/LF and no '.', so bodies
# never contain a dot-stuffing boundary and sizes stay exact.
_TEXT_SAFE = bytes(c for c in range(33, 127) if c != ord(".")) + b" "


def text_safe_bytes(seed: int, label: str, n: int) -> bytes:
    rng = random.Random(f"{seed}:{label}")
    return bytes(rng.choices(_TEXT_SAFE, k=n))


def wrapped_text_body(seed: int, label: str, n: int, width: int = 72) -> bytes:
    """Exactly n bytes of line-wrapped filler text (CRLFs included in n)."""
    raw = bytearray(text_safe_bytes(seed, label, n))
    step = width + 2
    for i in range(step - 2, n - 2, step):
        raw[i:i + 2] = CRLF
    return bytes(raw)


class Session:
    """Base session; subclasses override initial() and feed()."""

    closed: bool = False

    def initial(self) -> bytes:
        return b""

    def feed(self, data: bytes) -> bytes:
        raise NotImplementedError


class _LineSession(Session):
    """Buffers input and dispatches complete CRLF-terminated lines."""

    def __init__(self):
        self._buf = b""

    def feed(self, data: bytes) -> bytes:
        self._buf += data
        out = b""
        while not self.closed:
            if self._raw_mode():
                chunk = self._consume_raw()
                if chunk is None:
                    break
                out += chunk
                continue
            if CRLF not in self._buf:
                break
            line, _, self._buf = self._buf.partition(CRLF)
            out += self.handle_line(line)
        return out

    def _raw_mode(self) -> bool:
        return False

    def _consume_raw(self) -> bytes | None:
        return None

    def handle_line(self, line: bytes) -> bytes:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# HTTP


class HttpSession(Session):
    """One-request HTTP/1.1 session (Connection: close semantics)."""

    def __init__(self, resources: dict, seed: int, host: str):
        self._buf = b""
        self._resources = resources
        self._seed = seed
        self._host = host
        self.closed = False

    def feed(self, data: bytes) -> bytes:
        if self.closed:
            return b""
        self._buf += data
        if b"\r\n\r\n" not in self._buf:
            return b""
        head, _, _ = self._buf.partition(b"\r\n\r\n")
        request_line = head.split(CRLF)[0].decode("latin-1", "replace")
        parts = request_line.split()
        self.closed = True
        if len(parts) < 2 or parts[0] != "GET":
            return self._simple(400, b"bad request")
        path = parts[1]
        res = self._resources.get(path)
        if res is None:
            return self._simple(404, b"not found")
        if isinstance(res, RedirectDef):
            return (
                f"HTTP/1.1 {res.status} Found\r\nLocation: {res.location}\r\n"
                f"Connection: close\r\nContent-Length: 0\r\n\r\n"
            ).encode()
        if isinstance(res, PageDef):
            body = res.render().encode()
            return self._ok(body, "text/html")
        if isinstance(res, FileDef):
            body = res.body
            if body is None:
                body = deterministic_bytes(self._seed, f"{self._host}:{path}", res.size)
            header = self._header(len(body), res.content_type)
            if res.truncate_at is not None:
                return header + body[: res.truncate_at]
            return header + body
        if isinstance(res, (bytes, str)):
            body = res.encode() if isinstance(res, str) else res
            return self._ok(body, "application/json")
        return self._simple(500, b"unknown resource type")

    def _header(self, length: int, ctype: str) -> bytes:
        return (
            f"HTTP/1.1 200 OK\r\nContent-Type: {ctype}\r\n"
            f"Content-Length: {length}\r\nConnection: close\r\n\r\n"
        ).encode()

    def _ok(self, body: bytes, ctype: str) -> bytes:
        return self._header(len(body), ctype) + body

    def _simple(self, status: int, body: bytes) -> bytes:
        reason = {400: "Bad Request", 404: "Not Found", 500: "Error"}[status]
        return (
            f"HTTP/1.1 {status} {reason}\r\nContent-Type: text/plain\r\n"
            f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n"
        ).encode() + body


# ---------------------------------------------------------------------------
# Mail


@dataclass
class MailStore:
    """Shared SMTP-delivery / POP-retrieval mailbox state."""

    accounts: dict[str, str] = field(default_factory=dict)  # user -> password
    mailboxes: dict[str, list[bytes]] = field(default_factory=dict)
    _uid_counter: int = 0

    def deliver(self, rcpt: str, message: bytes) -> None:
        user = rcpt.split("@")[0]
        self.mailboxes.setdefault(user, []).append(message)

    def next_uid(self) -> int:
        self._uid_counter += 1
        return self._uid_counter


class SmtpSession(_LineSession):
    def __init__(self, store: MailStore):
        super().__init__()
        self._store = store
        self._rcpts: list[str] = []
        self._in_data = False
        self._data = b""

    def initial(self) -> bytes:
        return b"220 sim smtp ready\r\n"

    def _raw_mode(self) -> bool:
        return self._in_data

    def _consume_raw(self) -> bytes | None:
        end = self._buf.find(b"\r\n.\r\n")
        if end < 0:
            # Message may also start with the terminator-less edge ".\r\n".
            if self._buf.startswith(b".\r\n") and not self._data:
                self._buf = self._buf[3:]
                return self._finish_data()
            return None
        self._data += self._buf[:end]
        self._buf = self._buf[end + 5:]
        return self._finish_data()

    def _finish_data(self) -> bytes:
        for rcpt in self._rcpts:
            self._store.deliver(rcpt, self._data)
        self._in_data = False
        self._data = b""
        self._rcpts = []
        return b"250 ok message accepted\r\n"

    def handle_line(self, line: bytes) -> bytes:
        cmd = line.split(b" ", 1)[0].upper()
        if cmd in (b"HELO", b"EHLO"):
            return b"250 sim\r\n"
        if cmd == b"MAIL":
            return b"250 ok\r\n"
        if cmd == b"RCPT":
            addr = line.split(b":", 1)[-1].strip().strip(b"<>").decode("latin-1")
            self._rcpts.append(addr)
            return b"250 ok\r\n"
        if cmd == b"DATA":
            self._in_data = True
            return b"354 end with <CRLF>.<CRLF>\r\n"
        if cmd == b"QUIT":
            self.closed = True
            return b"221 bye\r\n"
        if cmd in (b"NOOP", b"RSET"):
            return b"250 ok\r\n"
        return b"500 unrecognized\r\n"


class PopSession(_LineSession):
    def __init__(self, store: MailStore):
        super().__init__()
        self._store = store
        self._user: str | None = None
        self._authed = False
        self._snapshot: list[bytes] = []
        self._deleted: set[int] = set()

    def initial(self) -> bytes:
        return b"+OK sim pop ready\r\n"

    def handle_line(self, line: bytes) -> bytes:
        parts = line.decode("latin-1").split()
        cmd = parts[0].upper() if parts else ""
        if cmd == "USER":
            self._user = parts[1] if len(parts) > 1 else ""
            return b"+OK\r\n"
        if cmd == "PASS":
            password = parts[1] if len(parts) > 1 else ""
            if self._user is not None and \
                    self._store.accounts.get(self._user) == password:
                self._authed = True
                self._snapshot = list(self._store.mailboxes.get(self._user, []))
                return b"+OK mailbox locked\r\n"
            return b"-ERR auth failed\r\n"
        if not self._authed:
            if cmd == "QUIT":
                self.closed = True
                return b"+OK bye\r\n"
            return b"-ERR not authenticated\r\n"
        if cmd == "STAT":
            live = [m for i, m in enumerate(self._snapshot) if i not in self._deleted]
            return f"+OK {len(live)} {sum(len(m) for m in live)}\r\n".encode()
        if cmd == "LIST":
            out = b"+OK\r\n"
            for i, m in enumerate(self._snapshot):
                if i not in self._deleted:
                    out += f"{i + 1} {len(m)}\r\n".encode()
            return out + b".\r\n"
        if cmd == "TOP":
            n = int(parts[1]) - 1
            if not 0 <= n < len(self._snapshot) or n in self._deleted:
                return b"-ERR no such message\r\n"
            headers, _, _ = self._snapshot[n].partition(b"\r\n\r\n")
            return b"+OK\r\n" + headers + b"\r\n\r\n.\r\n"
        if cmd == "RETR":
            n = int(parts[1]) - 1
            if not 0 <= n < len(self._snapshot) or n in self._deleted:
                return b"-ERR no such message\r\n"
            msg = self._snapshot[n]
            return f"+OK {len(msg)} octets\r\n".encode() + msg + b"\r\n.\r\n"
        if cmd == "DELE":
            n = int(parts[1]) - 1
            if not 0 <= n < len(self._snapshot):
                return b"-ERR no such message\r\n"
            self._deleted.add(n)
            return b"+OK deleted\r\n"
        if cmd == "QUIT":
            if self._user is not None and self._deleted:
                box = self._store.mailboxes.get(self._user, [])
                keep = [m for i, m in enumerate(self._snapshot) if i not in self._deleted]
                extra = box[len(self._snapshot):]  # delivered mid-session
                self._store.mailboxes[self._user] = keep + extra
            self.closed = True
            return b"+OK bye\r\n"
        if cmd == "NOOP":
            return b"+OK\r\n"
        return b"-ERR unrecognized\r\n"


# ---------------------------------------------------------------------------
# NNTP


class NntpSession(_LineSession):
    def __init__(self, groups: dict[str, GroupDef], filler_groups: list[str],
                 seed: int, host: str):
        super().__init__()
        self._groups = groups
        self._filler = filler_groups
        self._seed = seed
        self._host = host
        self._current: str | None = None

    def initial(self) -> bytes:
        return b"200 sim nntp ready\r\n"

    def _group_count(self, name: str) -> int:
        g = self._groups.get(name)
        return len(g.article_sizes) if g else 0

    def handle_line(self, line: bytes) -> bytes:
        parts = line.decode("latin-1").split()
        cmd = parts[0].upper() if parts else ""
        if cmd == "LIST":
            out = b"215 list of newsgroups follows\r\n"
            rows = []
            for name, g in self._groups.items():
                rows.append(f"{name} {len(g.article_sizes)} 1 y")
            for name in self._filler:
                rows.append(f"{name} 0 1 y")
            out += ("\r\n".join(rows) + "\r\n").encode() if rows else b""
            return out + b".\r\n"
        if cmd == "GROUP":
            name = parts[1] if len(parts) > 1 else ""
            if name not in self._groups:
                return b"411 no such newsgroup\r\n"
            self._current = name
            n = self._group_count(name)
            return f"211 {n} 1 {n} {name}\r\n".encode()
        if cmd in ("XOVER", "OVER"):
            if self._current is None:
                return b"412 no newsgroup selected\r\n"
            g = self._groups[self._current]
            first, last = 1, len(g.article_sizes)
            if len(parts) > 1 and "-" in parts[1]:
                a, _, b = parts[1].partition("-")
                first, last = max(1, int(a)), min(last, int(b))
            out = b"224 overview follows\r\n"
            rows = []
            for num in range(first, last + 1):
                size = g.article_sizes[num - 1]
                rows.append(
                    f"{num}\tsim article {num}\tposter@{self._host}\t"
                    f"01 Jan 2001 00:00:00 GMT\t<{num}@{self._current}>\t\t{size}\t1"
                )
            if rows:
                out += ("\r\n".join(rows) + "\r\n").encode()
            return out + b".\r\n"
        if cmd in ("BODY", "ARTICLE"):
            if self._current is None:
                return b"412 no newsgroup selected\r\n"
            g = self._groups[self._current]
            try:
                num = int(parts[1])
            except (IndexError, ValueError):
                return b"501 bad article number\r\n"
            if not 1 <= num <= len(g.article_sizes):
                return b"423 no such article\r\n"
            size = g.article_sizes[num - 1]
            body = wrapped_text_body(self._seed, f"{self._host}:{self._current}:{num}", size)
            code = b"222" if cmd == "BODY" else b"220"
            return (code + f" {num} <{num}@{self._current}>\r\n".encode()
                    + body + b"\r\n.\r\n")
        if cmd == "QUIT":
            self.closed = True
            return b"205 bye\r\n"
        return b"500 unrecognized\r\n"
