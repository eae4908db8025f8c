"""Battery execution: the fixed probe sequence under one battery id.

Order: echo probes, traceroutes, web targets (the fixed pages plus one
round-robin large file), mail, NNTP.  Strictly one transfer at a time;
individual probe failures never abort the battery.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..app_probes import (
    ProbeContext,
    fetch_page,
    mail_battery,
    nntp_battery,
    pick_round_robin,
)
from ..clients import http_get
from ..clock import Clock
from ..net_probes import EchoConfig, echo_probe, trace_path
from ..records import (
    Affiliation,
    Manifest,
    ManifestError,
    PathTrace,
    RttSeries,
    TransferSample,
    validate_manifest,
)
from ..transport import ProbeTransport, Transport, TransportError

logger = logging.getLogger(__name__)

LARGE_FILE_SOURCE_LABEL = "large-file-pool"


class ManifestUnavailableError(RuntimeError):
    """No fresh manifest and no cached one; the battery must be skipped."""


def fetch_manifest(transport: Transport, manifest_url: str,
                   cache_path: str | Path | None = None,
                   timeout_ms: float = 10_000.0) -> tuple[Manifest, str]:
    """Fetch and validate the manifest; fall back to the cached copy.

    Returns (manifest, origin) with origin "fresh" or "cache".  A fetched
    but invalid manifest is rejected and the cache retained.
    """
    cache_path = Path(cache_path) if cache_path is not None else None
    document = None
    try:
        resp = http_get(transport, manifest_url, timeout_ms=timeout_ms)
        if resp.status == 200:
            document = resp.body.decode("utf-8", "replace")
        else:
            logger.warning("manifest fetch returned HTTP %d", resp.status)
    except TransportError as exc:
        logger.warning("manifest fetch failed: %s", exc)

    if document is not None:
        try:
            manifest = validate_manifest(document)
        except ManifestError as exc:
            logger.warning("fetched manifest invalid, keeping cache: %s", exc)
        else:
            if cache_path is not None:
                cache_path.parent.mkdir(parents=True, exist_ok=True)
                cache_path.write_text(document, encoding="utf-8")
            return manifest, "fresh"

    if cache_path is not None and cache_path.exists():
        manifest = validate_manifest(cache_path.read_text(encoding="utf-8"))
        logger.warning("using cached manifest after fetch failure")
        return manifest, "cache"
    raise ManifestUnavailableError(
        f"manifest fetch from {manifest_url} failed and no cache exists"
    )


@dataclass
class BatteryResult:
    battery_id: str
    samples: list[TransferSample] = field(default_factory=list)
    rtt_series: list[RttSeries] = field(default_factory=list)
    traces: list[PathTrace] = field(default_factory=list)
    next_cursor: int = 0


def run_battery(
    transport: Transport,
    probe_transport: ProbeTransport,
    clock: Clock,
    manifest: Manifest,
    *,
    agent_id: str,
    provider_id: str,
    battery_id: str,
    rr_cursor: int = 0,
    timeout_ms: float = 10_000.0,
    echo_count: int = 10,
    echo_interval_ms: float = 1000.0,
    trace_max_hops: int = 30,
    credentials: dict[str, tuple[str, str]] | None = None,
) -> BatteryResult:
    result = BatteryResult(battery_id=battery_id, next_cursor=rr_cursor)
    ctx = ProbeContext(
        transport=transport,
        agent_id=agent_id,
        provider_id=provider_id,
        battery_id=battery_id,
        clock=clock,
        timeout_ms=timeout_ms,
        credentials=credentials or {},
    )

    for target in manifest.echo_targets:
        config = EchoConfig(target=target, count=echo_count,
                            interval_ms=echo_interval_ms)
        result.rtt_series.append(echo_probe(probe_transport, config, clock))

    for target in manifest.echo_targets:
        result.traces.append(
            trace_path(probe_transport, target, max_hops=trace_max_hops))

    for web_target in manifest.web_targets:
        timing = fetch_page(ctx, web_target.url, web_target.source_label,
                            web_target.affiliation)
        result.samples.extend(timing.all_samples())

    if manifest.large_files:
        url, result.next_cursor = pick_round_robin(
            list(manifest.large_files), rr_cursor)
        timing = fetch_page(ctx, url, LARGE_FILE_SOURCE_LABEL,
                            Affiliation.UNKNOWN)
        result.samples.extend(timing.all_samples())

    if manifest.mail is not None:
        result.samples.extend(mail_battery(ctx, manifest.mail))

    if manifest.nntp is not None and manifest.newsgroups:
        result.samples.extend(nntp_battery(
            ctx, manifest.nntp, list(manifest.newsgroups), manifest.n_largest))

    return result


def netprobe_log_lines(result: BatteryResult, agent_id: str) -> list[str]:
    """Serialize echo series for the local net-probe log / rtt upload."""
    lines = []
    for series in result.rtt_series:
        lines.append(json.dumps({
            "agent_id": agent_id,
            "target": series.target,
            "backend": series.backend,
            "rtts_ms": [p.rtt_ms for p in series.probes if p.rtt_ms is not None],
            "lost": sum(1 for p in series.probes if p.lost),
        }))
    for trace in result.traces:
        lines.append(json.dumps({
            "agent_id": agent_id,
            "trace_target": trace.target,
            "reached": trace.reached,
            "hops": [
                {"ttl": h.ttl, "address": h.address, "rtts_ms": list(h.rtts_ms)}
                for h in trace.hops
            ],
        }))
    return lines
