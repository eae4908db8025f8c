"""Application-level probe batteries: web page timing, mail, and Usenet.

A battery is strictly sequential: one transfer in flight at a time, so
probes never contend with each other for the access link under test.
Fetched payloads are consumed in memory only; just timing and size
metadata survive.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .clients import (
    NntpClient,
    PopClient,
    ProtocolError,
    SmtpClient,
    http_get,
)
from .clock import Clock, SystemClock
from .html_scan import extract_elements
from .records import (
    Affiliation,
    MailConfig,
    Outcome,
    ProbeKind,
    TransferSample,
)
from .transport import (
    ConnectError,
    DnsError,
    ReadTimeoutError,
    Transport,
    TransportError,
    TruncatedError,
)

MIN_PROBE_MESSAGE_BYTES = 300_000

# Mail delivery latency is unspecified upstream; poll a bounded number of
# times before declaring the probe lost.
POP_POLL_ATTEMPTS = 6
POP_POLL_SPACING_MS = 10_000.0

MAX_HEADERS = 500


class ProbeConfigError(ValueError):
    pass


@dataclass
class ProbeContext:
    """Everything a probe needs besides its target."""

    transport: Transport
    agent_id: str
    provider_id: str
    battery_id: str
    clock: Clock = field(default_factory=SystemClock)
    timeout_ms: float = 10_000.0
    # Credentials reference -> (user, password); references come from the
    # manifest so secrets never travel in it.
    credentials: dict[str, tuple[str, str]] = field(default_factory=dict)

    def sample_base(self, kind: ProbeKind, target: str, source_label: str,
                    affiliation: Affiliation) -> dict:
        return dict(
            agent_id=self.agent_id,
            provider_id=self.provider_id,
            battery_id=self.battery_id,
            timestamp=self.clock.wall_ms(),
            probe_kind=kind,
            target=target,
            source_label=source_label,
            affiliation=affiliation,
        )


def _failure_outcome(exc: Exception) -> Outcome:
    if isinstance(exc, DnsError):
        return Outcome.DNS_FAILURE
    if isinstance(exc, ConnectError):
        return Outcome.CONNECT_TIMEOUT
    if isinstance(exc, ReadTimeoutError):
        return Outcome.READ_TIMEOUT
    if isinstance(exc, TruncatedError):
        return Outcome.TRUNCATED
    return Outcome.PROTOCOL_ERROR


@dataclass
class PageTiming:
    """Timing of one web page: HTML, then each embedded element serially."""

    page_url: str
    html_sample: TransferSample
    element_samples: list[TransferSample]
    aggregate_sample: TransferSample | None

    @property
    def aggregate_elapsed_ms(self) -> float | None:
        return None if self.aggregate_sample is None else self.aggregate_sample.elapsed_ms

    @property
    def partial(self) -> bool:
        return bool(self.aggregate_sample and self.aggregate_sample.partial)

    def all_samples(self) -> list[TransferSample]:
        out = [self.html_sample, *self.element_samples]
        if self.aggregate_sample is not None:
            out.append(self.aggregate_sample)
        return out


def _timed_get(ctx: ProbeContext, kind: ProbeKind, url: str, source_label: str,
               affiliation: Affiliation) -> tuple[TransferSample, bytes, str, str]:
    """One timed HTTP fetch.  The timer starts immediately before the
    request is issued, so connection setup and redirects count.

    Returns (sample, body, content_type, final_url)."""
    base = ctx.sample_base(kind, url, source_label, affiliation)
    start = ctx.clock.monotonic_ms()
    try:
        resp = http_get(ctx.transport, url, timeout_ms=ctx.timeout_ms)
    except (TransportError, ProtocolError) as exc:
        elapsed = ctx.clock.monotonic_ms() - start
        sample = TransferSample(payload_bytes=0, outcome=_failure_outcome(exc),
                                elapsed_ms=elapsed if elapsed > 0 else None, **base)
        return sample, b"", "", url
    elapsed = ctx.clock.monotonic_ms() - start
    if resp.status != 200:
        sample = TransferSample(payload_bytes=len(resp.body),
                                outcome=Outcome.PROTOCOL_ERROR,
                                elapsed_ms=elapsed, **base)
        return sample, b"", "", resp.final_url
    sample = TransferSample.completed(payload_bytes=len(resp.body),
                                      elapsed_ms=elapsed, **base)
    return sample, resp.body, resp.headers.get("content-type", ""), resp.final_url


def fetch_page(ctx: ProbeContext, url: str, source_label: str,
               affiliation: Affiliation) -> PageTiming:
    """Fetch a page: the HTML, then every embedded element exactly once, in
    document order, one at a time.

    Emits one sample per fetch plus a page-aggregate sample spanning the
    first request to the last byte of the last element.  Non-HTML targets
    (the large-file pool) simply have no elements.
    """
    page_start = ctx.clock.monotonic_ms()
    html_sample, body, ctype, final_url = _timed_get(
        ctx, ProbeKind.WEB_HTML, url, source_label, affiliation)
    if html_sample.outcome is not Outcome.OK:
        return PageTiming(page_url=url, html_sample=html_sample,
                          element_samples=[], aggregate_sample=None)

    element_urls: list[str] = []
    if "html" in ctype.lower():
        element_urls = extract_elements(body.decode("utf-8", "replace"), final_url)

    element_samples = []
    total_bytes = html_sample.payload_bytes
    any_failed = False
    for element_url in element_urls:
        sample, elem_body, _, _ = _timed_get(
            ctx, ProbeKind.WEB_ELEMENT, element_url, source_label, affiliation)
        element_samples.append(sample)
        total_bytes += sample.payload_bytes
        if sample.outcome is not Outcome.OK:
            any_failed = True

    aggregate_elapsed = ctx.clock.monotonic_ms() - page_start
    base = ctx.sample_base(ProbeKind.WEB_PAGE_AGGREGATE, url, source_label,
                           affiliation)
    aggregate = TransferSample(
        payload_bytes=total_bytes,
        elapsed_ms=aggregate_elapsed,
        effective_bps=8000.0 * total_bytes / aggregate_elapsed,
        outcome=Outcome.OK,
        partial=any_failed,
        **base,
    )
    return PageTiming(page_url=url, html_sample=html_sample,
                      element_samples=element_samples, aggregate_sample=aggregate)


# ---------------------------------------------------------------------------
# Mail


# Body alphabet: 8-bit minus CR, LF, NUL and '.', keeping the payload safe
# for line-oriented mail transfer while staying essentially incompressible.
_BODY_ALPHABET = bytes(c for c in range(256) if c not in (0, 10, 13, ord(".")))
_BODY_TABLE = bytes(_BODY_ALPHABET[i % len(_BODY_ALPHABET)] for i in range(256))


@dataclass(frozen=True)
class ProbeMessage:
    subject: str
    wire_bytes: bytes  # headers + blank line + body

    @property
    def total_size_bytes(self) -> int:
        return len(self.wire_bytes)


def generate_probe_message(size_bytes: int, battery_id: str) -> ProbeMessage:
    """A self-addressed probe message of at least ``size_bytes`` bytes.

    The body is pseudorandom and incompressible, so transparent compression
    anywhere on the path cannot flatter the measured rate; the subject tag
    makes the message retrievable by battery id.
    """
    if size_bytes < MIN_PROBE_MESSAGE_BYTES:
        raise ProbeConfigError(
            f"probe message size {size_bytes} below {MIN_PROBE_MESSAGE_BYTES} floor"
        )
    subject = f"qosmon-probe {battery_id}"
    rng = random.Random(f"probe-message:{battery_id}")
    body = rng.randbytes(size_bytes).translate(_BODY_TABLE)
    headers = (
        f"Subject: {subject}\r\n"
        f"From: probe@qosmon\r\nTo: probe@qosmon\r\n"
        f"X-Battery: {battery_id}\r\n\r\n"
    ).encode()
    return ProbeMessage(subject=subject, wire_bytes=headers + body)


def _split_hostport(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    return host, int(port)


def mail_battery(ctx: ProbeContext, mail: MailConfig) -> list[TransferSample]:
    """Timed SMTP upload of a probe message, then timed POP retrieval.

    The SMTP timer covers message payload transmission through server
    acceptance; the POP timer covers the retrieval command through the
    final byte.  The probe message is deleted after retrieval.
    """
    message = generate_probe_message(mail.probe_size_bytes, ctx.battery_id)
    user, password = ctx.credentials.get(mail.account, ("probe", "probe"))
    samples: list[TransferSample] = []

    smtp_host, smtp_port = _split_hostport(mail.smtp)
    smtp_base = ctx.sample_base(ProbeKind.MAIL_SMTP, mail.smtp, "mail",
                                Affiliation.UNKNOWN)
    upload_start = [0.0]
    try:
        stream = ctx.transport.open_stream(smtp_host, smtp_port, ctx.timeout_ms)
        client = SmtpClient(stream)
        client.send_message(
            f"{user}@qosmon", f"{user}@{smtp_host}", message.wire_bytes,
            on_payload_start=lambda: upload_start.__setitem__(
                0, ctx.clock.monotonic_ms()),
        )
        elapsed = ctx.clock.monotonic_ms() - upload_start[0]
        client.quit()
        samples.append(TransferSample.completed(
            payload_bytes=message.total_size_bytes, elapsed_ms=elapsed,
            **smtp_base))
        uploaded = True
    except (TransportError, ProtocolError) as exc:
        samples.append(TransferSample(payload_bytes=0,
                                      outcome=_failure_outcome(exc), **smtp_base))
        uploaded = False

    pop_host, pop_port = _split_hostport(mail.pop)
    pop_base = ctx.sample_base(ProbeKind.MAIL_POP, mail.pop, "mail",
                               Affiliation.UNKNOWN)
    if not uploaded:
        samples.append(TransferSample(payload_bytes=0,
                                      outcome=Outcome.READ_TIMEOUT, **pop_base))
        return samples

    last_error: Exception | None = None
    for attempt in range(POP_POLL_ATTEMPTS):
        if attempt > 0:
            ctx.clock.sleep(POP_POLL_SPACING_MS)
        try:
            stream = ctx.transport.open_stream(pop_host, pop_port, ctx.timeout_ms)
            client = PopClient(stream)
            client.login(user, password)
            found = None
            for num, _size in client.list_messages():
                if message.subject in client.top_headers(num):
                    found = num
                    break
            if found is None:
                client.quit()
                last_error = None
                continue
            start = ctx.clock.monotonic_ms()
            body = client.retrieve(found)
            elapsed = ctx.clock.monotonic_ms() - start
            client.delete(found)
            client.quit()
            samples.append(TransferSample.completed(
                payload_bytes=len(body), elapsed_ms=elapsed, **pop_base))
            return samples
        except (TransportError, ProtocolError) as exc:
            last_error = exc
    outcome = Outcome.READ_TIMEOUT if last_error is None \
        else _failure_outcome(last_error)
    samples.append(TransferSample(payload_bytes=0, outcome=outcome, **pop_base))
    return samples


# ---------------------------------------------------------------------------
# Usenet


def nntp_battery(ctx: ProbeContext, nntp: str, newsgroups: list[str],
                 n_largest: int) -> list[TransferSample]:
    """Timed NNTP probes: full group list, then per group the newest
    headers (up to 500) and the N largest articles by advertised size."""
    if not newsgroups:
        raise ProbeConfigError("newsgroups list must be non-empty")
    host, port = _split_hostport(nntp)
    samples: list[TransferSample] = []

    list_base = ctx.sample_base(ProbeKind.NNTP_LIST, nntp, "nntp",
                                Affiliation.UNKNOWN)
    try:
        stream = ctx.transport.open_stream(host, port, ctx.timeout_ms)
        client = NntpClient(stream)
    except (TransportError, ProtocolError) as exc:
        samples.append(TransferSample(payload_bytes=0,
                                      outcome=_failure_outcome(exc), **list_base))
        return samples

    try:
        start = ctx.clock.monotonic_ms()
        groups, list_bytes = client.list_groups()
        elapsed = ctx.clock.monotonic_ms() - start
        samples.append(TransferSample.completed(
            payload_bytes=list_bytes, elapsed_ms=elapsed, **list_base))
    except (TransportError, ProtocolError) as exc:
        samples.append(TransferSample(payload_bytes=0,
                                      outcome=_failure_outcome(exc), **list_base))
        client.close()
        return samples

    for group in newsgroups:
        headers_base = ctx.sample_base(ProbeKind.NNTP_HEADERS,
                                       f"{nntp}/{group}", "nntp",
                                       Affiliation.UNKNOWN)
        try:
            _count, first, last = client.select_group(group)
        except ProtocolError:
            samples.append(TransferSample(payload_bytes=0,
                                          outcome=Outcome.PROTOCOL_ERROR,
                                          **headers_base))
            continue
        except TransportError as exc:
            samples.append(TransferSample(payload_bytes=0,
                                          outcome=_failure_outcome(exc),
                                          **headers_base))
            break
        window_first = max(first, last - MAX_HEADERS + 1)
        try:
            start = ctx.clock.monotonic_ms()
            entries, overview_bytes = client.overview(window_first, last)
            elapsed = ctx.clock.monotonic_ms() - start
            samples.append(TransferSample.completed(
                payload_bytes=overview_bytes, elapsed_ms=elapsed, **headers_base))
        except (TransportError, ProtocolError) as exc:
            samples.append(TransferSample(payload_bytes=0,
                                          outcome=_failure_outcome(exc),
                                          **headers_base))
            continue
        largest = sorted(entries, key=lambda e: e.size_bytes, reverse=True)
        for entry in largest[:n_largest]:
            article_base = ctx.sample_base(
                ProbeKind.NNTP_ARTICLE, f"{nntp}/{group}/{entry.number}",
                "nntp", Affiliation.UNKNOWN)
            try:
                start = ctx.clock.monotonic_ms()
                body = client.body(entry.number)
                elapsed = ctx.clock.monotonic_ms() - start
                samples.append(TransferSample.completed(
                    payload_bytes=len(body), elapsed_ms=elapsed, **article_base))
            except (TransportError, ProtocolError) as exc:
                samples.append(TransferSample(payload_bytes=0,
                                              outcome=_failure_outcome(exc),
                                              **article_base))
    try:
        client.quit()
    except (TransportError, ProtocolError):
        pass
    return samples


def pick_round_robin(large_files: list[str], cursor: int) -> tuple[str, int]:
    """Rotate through the large-file pool; the cursor persists across
    batteries."""
    if not large_files:
        raise ProbeConfigError("large-file pool is empty")
    return large_files[cursor % len(large_files)], cursor + 1
