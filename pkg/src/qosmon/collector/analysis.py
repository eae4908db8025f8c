"""Aggregation over stored records: grouped summaries and scatter export.

Size buckets are log-spaced decade thirds (… 10–21.5 kB, 21.5–46.4 kB,
46.4–100 kB …) so rates are compared only between transfers of similar
size, controlling for the ramp-up size confound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..records import Outcome, TransferSample

_BUCKETS_PER_DECADE = 3


def bucket_index(payload_bytes: int) -> int:
    if payload_bytes < 1:
        return -1
    return math.floor(_BUCKETS_PER_DECADE * math.log10(payload_bytes) + 1e-9)


def _format_size(nbytes: float) -> str:
    if nbytes >= 1e6:
        return f"{nbytes / 1e6:.3g}MB"
    if nbytes >= 1e3:
        return f"{nbytes / 1e3:.3g}kB"
    return f"{nbytes:.3g}B"


def bucket_label(idx: int) -> str:
    lo = 10.0 ** (idx / _BUCKETS_PER_DECADE)
    hi = 10.0 ** ((idx + 1) / _BUCKETS_PER_DECADE)
    return f"{_format_size(lo)}-{_format_size(hi)}"


def size_bucket(payload_bytes: int) -> str:
    """Human-readable label of the log-spaced bucket for a payload size."""
    return bucket_label(bucket_index(payload_bytes))


# Probe kinds excluded from throughput-style statistics by default: the
# group-list probe is thousands of tiny exchanges, not a bulk transfer.
NON_BULK_KINDS = {"nntp_list"}


@dataclass(frozen=True)
class AggregateSummary:
    provider_id: str
    source_label: str
    probe_kind: str
    size_bucket: str
    n: int
    median_bps: float
    p10_bps: float
    p90_bps: float
    failure_rate: float
    window: tuple[int, int]


def _in_window(sample: TransferSample, window: tuple[int, int] | None) -> bool:
    if window is None:
        return True
    return window[0] <= sample.timestamp < window[1]


def aggregate_summary(
    records: list[TransferSample],
    window: tuple[int, int] | None = None,
    group_by: tuple[str, ...] = ("provider_id", "source_label", "probe_kind"),
) -> list[AggregateSummary]:
    """Deterministic grouped summaries.

    Rate percentiles are computed over completed samples only; the failure
    rate is over all samples in the group.  Groups always include the size
    bucket on top of the requested keys.
    """
    groups: dict[tuple, list[TransferSample]] = {}
    for sample in records:
        if not _in_window(sample, window):
            continue
        key = tuple(
            getattr(sample, k).value if k == "probe_kind" else getattr(sample, k)
            for k in group_by
        ) + (bucket_index(sample.payload_bytes),)
        groups.setdefault(key, []).append(sample)

    out: list[AggregateSummary] = []
    for key in sorted(groups):
        samples = groups[key]
        completed = [s for s in samples if s.outcome is Outcome.OK]
        failures = len(samples) - len(completed)
        if completed:
            rates = np.array([s.effective_bps for s in completed])
            median = float(np.median(rates))
            p10 = float(np.percentile(rates, 10))
            p90 = float(np.percentile(rates, 90))
        else:
            median = p10 = p90 = float("nan")
        fields = dict(zip(group_by, key[:-1]))
        bucket_bytes = next(
            (s.payload_bytes for s in samples), 0)
        out.append(AggregateSummary(
            provider_id=str(fields.get("provider_id", "")),
            source_label=str(fields.get("source_label", "")),
            probe_kind=str(fields.get("probe_kind", "")),
            size_bucket=size_bucket(bucket_bytes),
            n=len(samples),
            median_bps=median,
            p10_bps=p10,
            p90_bps=p90,
            failure_rate=failures / len(samples),
            window=window if window is not None else (0, 0),
        ))
    return out


@dataclass(frozen=True)
class ScatterRow:
    payload_bytes: int
    effective_bps: float
    source_label: str
    probe_kind: str


def export_scatter(
    records: list[TransferSample],
    provider_id: str | None = None,
    source_label: str | None = None,
    probe_kinds: set[str] | None = None,
    window: tuple[int, int] | None = None,
) -> list[ScatterRow]:
    """One row per completed matching sample, ordered by timestamp.

    Plotting payload_bytes against effective_bps reproduces the size-vs-
    average-rate scatter view per content source.
    """
    matching = [
        s for s in records
        if s.outcome is Outcome.OK
        and _in_window(s, window)
        and (provider_id is None or s.provider_id == provider_id)
        and (source_label is None or s.source_label == source_label)
        and (probe_kinds is None or s.probe_kind.value in probe_kinds)
    ]
    matching.sort(key=lambda s: (s.timestamp, s.target))
    return [
        ScatterRow(payload_bytes=s.payload_bytes,
                   effective_bps=s.effective_bps,
                   source_label=s.source_label,
                   probe_kind=s.probe_kind.value)
        for s in matching
    ]


def scatter_csv(rows: list[ScatterRow]) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["payload_bytes", "effective_bps", "source_label", "probe_kind"])
    for row in rows:
        writer.writerow([row.payload_bytes, row.effective_bps,
                         row.source_label, row.probe_kind])
    return buf.getvalue()
