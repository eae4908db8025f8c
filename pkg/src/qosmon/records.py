"""Measurement record, manifest, and report types plus their wire formats.

The wire/spool format is newline-delimited UTF-8 JSON, one record per line,
schema-versioned.  Records are immutable values; everything here is safe to
share across threads.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# Redundantly stored effective_bps is re-derived on parse; a mismatch beyond
# this relative tolerance indicates corruption and is logged.
RATE_MISMATCH_TOL = 0.001

# Floor on mail probe payload: smaller messages never escape slow start.
MIN_PROBE_SIZE_BYTES = 300_000


class InvalidMeasurementError(ValueError):
    """A measurement violates a physical precondition (e.g. elapsed <= 0)."""


class RecordParseError(ValueError):
    """A serialized record line is malformed; message names the field."""


class ManifestError(ValueError):
    """Manifest validation failed; ``violations`` lists every problem."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class ProbeKind(str, enum.Enum):
    WEB_HTML = "web_html"
    WEB_ELEMENT = "web_element"
    WEB_PAGE_AGGREGATE = "web_page_aggregate"
    MAIL_POP = "mail_pop"
    MAIL_SMTP = "mail_smtp"
    NNTP_LIST = "nntp_list"
    NNTP_HEADERS = "nntp_headers"
    NNTP_ARTICLE = "nntp_article"


class Affiliation(str, enum.Enum):
    AFFILIATED = "affiliated"
    UNAFFILIATED = "unaffiliated"
    UNKNOWN = "unknown"


class Outcome(str, enum.Enum):
    OK = "ok"
    DNS_FAILURE = "dns_failure"
    CONNECT_TIMEOUT = "connect_timeout"
    READ_TIMEOUT = "read_timeout"
    PROTOCOL_ERROR = "protocol_error"
    TRUNCATED = "truncated"


def compute_effective_rate(payload_bytes: int, elapsed_ms: float) -> float:
    """Effective data rate in bits per second: payload bits / elapsed seconds.

    Counts application payload only; no transport or IP overhead is added.
    """
    if elapsed_ms <= 0:
        raise InvalidMeasurementError(
            f"elapsed_ms must be > 0, got {elapsed_ms!r}"
        )
    if payload_bytes < 0:
        raise InvalidMeasurementError(
            f"payload_bytes must be >= 0, got {payload_bytes!r}"
        )
    return 8.0 * payload_bytes / (elapsed_ms / 1000.0)


@dataclass(frozen=True)
class TransferSample:
    """One timed transfer, completed or failed."""

    agent_id: str
    provider_id: str
    battery_id: str
    timestamp: int  # UTC wall-clock milliseconds
    probe_kind: ProbeKind
    target: str
    source_label: str
    affiliation: Affiliation
    payload_bytes: int
    outcome: Outcome
    elapsed_ms: float | None = None
    effective_bps: float | None = None
    # Page-aggregate samples only: some element of the page failed.
    partial: bool = False
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.payload_bytes < 0:
            raise InvalidMeasurementError("payload_bytes must be >= 0")
        if self.outcome is Outcome.OK:
            if self.elapsed_ms is None or self.elapsed_ms <= 0:
                raise InvalidMeasurementError(
                    "completed sample requires elapsed_ms > 0"
                )

    @classmethod
    def completed(cls, *, payload_bytes: int, elapsed_ms: float, **kw) -> "TransferSample":
        """Build an ok sample with effective_bps derived from bytes/elapsed."""
        rate = compute_effective_rate(payload_bytes, elapsed_ms)
        return cls(
            payload_bytes=payload_bytes,
            elapsed_ms=elapsed_ms,
            effective_bps=rate,
            outcome=Outcome.OK,
            **kw,
        )

    @property
    def dedup_key(self) -> tuple:
        return (
            self.agent_id,
            self.battery_id,
            self.probe_kind.value,
            self.target,
            self.timestamp,
        )


@dataclass(frozen=True)
class EchoProbeResult:
    """One echo probe: a measured RTT or a loss."""

    sequence: int
    rtt_ms: float | None  # None means lost

    @property
    def lost(self) -> bool:
        return self.rtt_ms is None


@dataclass(frozen=True)
class RttSeries:
    """Ordered echo-probe results against one target."""

    target: str
    backend: str  # "icmp_echo" | "tcp_connect" | "simnet"
    probes: tuple[EchoProbeResult, ...]
    outcome: Outcome = Outcome.OK

    def __post_init__(self):
        seqs = [p.sequence for p in self.probes]
        if any(b <= a for a, b in zip(seqs, seqs[1:])):
            raise InvalidMeasurementError("sequence numbers must strictly increase")


@dataclass(frozen=True)
class Hop:
    """One hop in a path trace; unresponsive hops carry no address."""

    ttl: int
    address: str | None
    rtts_ms: tuple[float, ...] = ()


@dataclass(frozen=True)
class PathTrace:
    target: str
    hops: tuple[Hop, ...]
    reached: bool

    def __post_init__(self):
        for i, hop in enumerate(self.hops):
            if hop.ttl != i + 1:
                raise InvalidMeasurementError("hop TTLs must be 1..k with no gaps")


@dataclass(frozen=True)
class WebTarget:
    url: str
    source_label: str
    affiliation: Affiliation


@dataclass(frozen=True)
class MailConfig:
    smtp: str  # host:port
    pop: str  # host:port
    account: str  # credentials reference "user:secret-ref"
    probe_size_bytes: int


@dataclass(frozen=True)
class Manifest:
    """The agent's downloaded test configuration."""

    version: int
    poll_interval_min: float
    web_targets: tuple[WebTarget, ...]
    large_files: tuple[str, ...]
    newsgroups: tuple[str, ...]
    n_largest: int
    mail: MailConfig | None
    nntp: str | None  # host:port
    echo_targets: tuple[str, ...]
    collector_endpoint: str


@dataclass(frozen=True)
class ThroughputFit:
    """Fitted asymptotic channel model elapsed = t0 + bits/ceiling."""

    ceiling_bps: float
    startup_ms: float
    n_samples: int
    rms_residual_ms: float
    sample_filter: str = ""


@dataclass(frozen=True)
class BucketStat:
    size_bucket: str
    median_bps_a: float
    median_bps_b: float
    n_a: int
    n_b: int


@dataclass(frozen=True)
class BiasReport:
    """Per-provider comparison of two content sources over a time window."""

    provider_id: str
    source_a: str
    source_b: str
    window: tuple[int, int]
    buckets: tuple[BucketStat, ...]
    median_diff_rel: float | None
    ci_low: float | None
    ci_high: float | None
    n_a: int
    n_b: int
    flagged: bool
    status: str = "ok"  # "ok" | "insufficient_data"
    latency_evidence: dict | None = None


# ---------------------------------------------------------------------------
# Wire format


def _enum_value(x):
    return x.value if isinstance(x, enum.Enum) else x


def serialize_record(sample: TransferSample) -> str:
    """One UTF-8 JSON object on one line; optional absent fields omitted."""
    doc = {
        "schema_version": sample.schema_version,
        "agent_id": sample.agent_id,
        "provider_id": sample.provider_id,
        "battery_id": sample.battery_id,
        "timestamp": sample.timestamp,
        "probe_kind": sample.probe_kind.value,
        "target": sample.target,
        "source_label": sample.source_label,
        "affiliation": sample.affiliation.value,
        "payload_bytes": sample.payload_bytes,
        "outcome": sample.outcome.value,
    }
    if sample.elapsed_ms is not None:
        doc["elapsed_ms"] = sample.elapsed_ms
    if sample.effective_bps is not None:
        doc["effective_bps"] = sample.effective_bps
    if sample.partial:
        doc["partial"] = True
    return json.dumps(doc, separators=(",", ":"))


_REQUIRED_FIELDS = (
    "schema_version",
    "agent_id",
    "provider_id",
    "battery_id",
    "timestamp",
    "probe_kind",
    "target",
    "source_label",
    "affiliation",
    "payload_bytes",
    "outcome",
)


def parse_record(line: str) -> TransferSample:
    """Parse one record line; unknown fields are ignored.

    The stored effective_bps is checked against the rate re-derived from
    (payload_bytes, elapsed_ms); a mismatch beyond 0.1% logs a warning.
    """
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordParseError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise RecordParseError("record line must be a JSON object")
    for name in _REQUIRED_FIELDS:
        if name not in doc:
            raise RecordParseError(f"missing required field {name!r}")
    try:
        kind = ProbeKind(doc["probe_kind"])
    except ValueError:
        raise RecordParseError(f"unknown probe_kind {doc['probe_kind']!r}") from None
    try:
        affiliation = Affiliation(doc["affiliation"])
    except ValueError:
        raise RecordParseError(f"unknown affiliation {doc['affiliation']!r}") from None
    try:
        outcome = Outcome(doc["outcome"])
    except ValueError:
        raise RecordParseError(f"unknown outcome {doc['outcome']!r}") from None

    payload_bytes = doc["payload_bytes"]
    if not isinstance(payload_bytes, int) or payload_bytes < 0:
        raise RecordParseError("payload_bytes must be a non-negative integer")
    elapsed_ms = doc.get("elapsed_ms")
    effective_bps = doc.get("effective_bps")

    if outcome is Outcome.OK:
        if elapsed_ms is None:
            raise RecordParseError("outcome=ok requires elapsed_ms")
        if not isinstance(elapsed_ms, (int, float)) or elapsed_ms <= 0:
            raise RecordParseError("elapsed_ms must be > 0")
        derived = compute_effective_rate(payload_bytes, elapsed_ms)
        if effective_bps is None:
            effective_bps = derived
        elif not math.isclose(effective_bps, derived, rel_tol=RATE_MISMATCH_TOL, abs_tol=1e-9):
            logger.warning(
                "effective_bps mismatch in record (stored %.1f, derived %.1f); "
                "possible corruption", effective_bps, derived,
            )
    else:
        # Failed transfers carry no rate; bytes are those received pre-failure.
        effective_bps = None

    try:
        return TransferSample(
            schema_version=int(doc["schema_version"]),
            agent_id=str(doc["agent_id"]),
            provider_id=str(doc["provider_id"]),
            battery_id=str(doc["battery_id"]),
            timestamp=int(doc["timestamp"]),
            probe_kind=kind,
            target=str(doc["target"]),
            source_label=str(doc["source_label"]),
            affiliation=affiliation,
            payload_bytes=payload_bytes,
            outcome=outcome,
            elapsed_ms=float(elapsed_ms) if elapsed_ms is not None else None,
            effective_bps=float(effective_bps) if effective_bps is not None else None,
            partial=bool(doc.get("partial", False)),
        )
    except (TypeError, ValueError, InvalidMeasurementError) as exc:
        raise RecordParseError(str(exc)) from None


# ---------------------------------------------------------------------------
# Manifest format


def _parse_hostport(value, name: str, violations: list[str]) -> str | None:
    if not isinstance(value, str) or ":" not in value:
        violations.append(f"{name} must be a 'host:port' string, got {value!r}")
        return None
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        violations.append(f"{name} must be a 'host:port' string, got {value!r}")
        return None
    return value


def validate_manifest(document: str | dict) -> Manifest:
    """Parse and validate a manifest JSON document.

    Raises ManifestError listing every violation; never silently defaults a
    required field.
    """
    violations: list[str] = []
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ManifestError([f"not valid JSON: {exc}"]) from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ManifestError(["manifest must be a JSON object"])

    def require(name, typ, check=None, msg=None):
        if name not in doc:
            violations.append(f"missing required field {name!r}")
            return None
        value = doc[name]
        if not isinstance(value, typ):
            violations.append(f"{name} has wrong type {type(value).__name__}")
            return None
        if check is not None and not check(value):
            violations.append(msg or f"{name} failed validation")
            return None
        return value

    version = require("version", int)
    poll = require("poll_interval_min", (int, float), lambda v: v > 0,
                   "poll_interval_min must be > 0")
    n_largest = require("n_largest", int, lambda v: v >= 1,
                        "n_largest must be >= 1")
    collector_endpoint = require("collector_endpoint", str)

    web_targets: list[WebTarget] = []
    raw_targets = require("web_targets", list)
    if raw_targets is not None:
        if not raw_targets:
            violations.append("web_targets must be non-empty")
        for i, t in enumerate(raw_targets):
            if not isinstance(t, dict) or "url" not in t or "source_label" not in t:
                violations.append(f"web_targets[{i}] needs url and source_label")
                continue
            try:
                aff = Affiliation(t.get("affiliation", "unknown"))
            except ValueError:
                violations.append(f"web_targets[{i}] has unknown affiliation")
                continue
            web_targets.append(WebTarget(t["url"], t["source_label"], aff))

    large_files = doc.get("large_files", [])
    if not isinstance(large_files, list) or not all(isinstance(u, str) for u in large_files):
        violations.append("large_files must be a list of URL strings")
        large_files = []

    newsgroups = doc.get("newsgroups", [])
    if not isinstance(newsgroups, list) or not all(isinstance(g, str) for g in newsgroups):
        violations.append("newsgroups must be a list of group names")
        newsgroups = []

    mail = None
    if "mail" in doc and doc["mail"] is not None:
        m = doc["mail"]
        if not isinstance(m, dict):
            violations.append("mail must be an object")
        else:
            smtp = _parse_hostport(m.get("smtp"), "mail.smtp", violations)
            pop = _parse_hostport(m.get("pop"), "mail.pop", violations)
            size = m.get("probe_size_bytes")
            if not isinstance(size, int) or size < MIN_PROBE_SIZE_BYTES:
                violations.append(
                    f"mail.probe_size_bytes below {MIN_PROBE_SIZE_BYTES} floor: {size!r}"
                )
            account = m.get("account")
            if not isinstance(account, str) or not account:
                violations.append("mail.account must be a non-empty credentials reference")
            if smtp and pop and isinstance(size, int) and size >= MIN_PROBE_SIZE_BYTES \
                    and isinstance(account, str) and account:
                mail = MailConfig(smtp=smtp, pop=pop, account=account,
                                  probe_size_bytes=size)

    nntp = None
    if "nntp" in doc and doc["nntp"] is not None:
        nntp = _parse_hostport(doc["nntp"], "nntp", violations)

    echo_targets = doc.get("echo_targets", [])
    if not isinstance(echo_targets, list) or not all(isinstance(h, str) for h in echo_targets):
        violations.append("echo_targets must be a list of host strings")
        echo_targets = []

    if violations:
        raise ManifestError(violations)

    return Manifest(
        version=version,
        poll_interval_min=float(poll),
        web_targets=tuple(web_targets),
        large_files=tuple(large_files),
        newsgroups=tuple(newsgroups),
        n_largest=n_largest,
        mail=mail,
        nntp=nntp,
        echo_targets=tuple(echo_targets),
        collector_endpoint=collector_endpoint,
    )


def manifest_to_json(manifest: Manifest) -> str:
    doc = {
        "version": manifest.version,
        "poll_interval_min": manifest.poll_interval_min,
        "web_targets": [
            {"url": t.url, "source_label": t.source_label,
             "affiliation": t.affiliation.value}
            for t in manifest.web_targets
        ],
        "large_files": list(manifest.large_files),
        "newsgroups": list(manifest.newsgroups),
        "n_largest": manifest.n_largest,
        "collector_endpoint": manifest.collector_endpoint,
        "echo_targets": list(manifest.echo_targets),
    }
    if manifest.mail is not None:
        doc["mail"] = {
            "smtp": manifest.mail.smtp,
            "pop": manifest.mail.pop,
            "account": manifest.mail.account,
            "probe_size_bytes": manifest.mail.probe_size_bytes,
        }
    if manifest.nntp is not None:
        doc["nntp"] = manifest.nntp
    return json.dumps(doc, indent=2)
