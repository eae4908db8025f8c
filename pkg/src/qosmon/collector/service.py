"""HTTP face of the collector.

POST /ingest takes newline-delimited records and answers with an exact
receipt; the analysis endpoints are read-only views over the stored
records.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from ..records import RecordParseError
from .analysis import aggregate_summary, export_scatter, scatter_csv
from .bias import BiasParams, detect_bias
from .store import RecordStore, parse_rtt_line


class RejectedLine(BaseModel):
    line_no: int
    reason: str


class IngestReceiptModel(BaseModel):
    accepted: int
    duplicates: int
    rejected: list[RejectedLine]


class SummaryRowModel(BaseModel):
    provider_id: str
    source_label: str
    probe_kind: str
    size_bucket: str
    n: int
    median_bps: float | None
    p10_bps: float | None
    p90_bps: float | None
    failure_rate: float


class BucketStatModel(BaseModel):
    size_bucket: str
    median_bps_a: float
    median_bps_b: float
    n_a: int
    n_b: int


class BiasReportModel(BaseModel):
    provider_id: str
    source_a: str
    source_b: str
    buckets: list[BucketStatModel]
    median_diff_rel: float | None
    ci_low: float | None
    ci_high: float | None
    n_a: int
    n_b: int
    flagged: bool
    status: str
    latency_evidence: dict[str, float | None] | None


class ScatterRowModel(BaseModel):
    payload_bytes: int
    effective_bps: float
    source_label: str
    probe_kind: str


def _window(start: int | None, end: int | None) -> tuple[int, int] | None:
    if start is None and end is None:
        return None
    return (start or 0, end if end is not None else 2**62)


def create_app(store: RecordStore) -> FastAPI:
    app = FastAPI(title="qosmon collector", version="0.1.0")
    app.state.store = store

    @app.post("/ingest", response_model=IngestReceiptModel)
    async def ingest(request: Request) -> IngestReceiptModel:
        body = await request.body()
        lines = body.decode("utf-8", "replace").splitlines()
        receipt = store.ingest_batch(lines)
        return IngestReceiptModel(
            accepted=receipt.accepted,
            duplicates=receipt.duplicates,
            rejected=[RejectedLine(line_no=n, reason=r)
                      for n, r in receipt.rejected],
        )

    @app.post("/ingest/rtt")
    async def ingest_rtt(request: Request) -> dict:
        body = await request.body()
        accepted = 0
        for line in body.decode("utf-8", "replace").splitlines():
            if not line.strip():
                continue
            try:
                store.ingest_rtt(parse_rtt_line(line))
                accepted += 1
            except RecordParseError:
                pass
        return {"accepted": accepted}

    @app.get("/summary", response_model=list[SummaryRowModel])
    def summary(window_start: int | None = None,
                window_end: int | None = None,
                provider: str | None = None) -> list[SummaryRowModel]:
        records = store.snapshot()
        if provider is not None:
            records = [r for r in records if r.provider_id == provider]
        rows = aggregate_summary(records, window=_window(window_start, window_end))
        return [
            SummaryRowModel(
                provider_id=r.provider_id, source_label=r.source_label,
                probe_kind=r.probe_kind, size_bucket=r.size_bucket, n=r.n,
                median_bps=None if r.median_bps != r.median_bps else r.median_bps,
                p10_bps=None if r.p10_bps != r.p10_bps else r.p10_bps,
                p90_bps=None if r.p90_bps != r.p90_bps else r.p90_bps,
                failure_rate=r.failure_rate,
            )
            for r in rows
        ]

    @app.get("/bias", response_model=BiasReportModel)
    def bias(provider: str, source_a: str, source_b: str,
             window_start: int | None = None, window_end: int | None = None,
             rel_threshold: float = 0.05, min_samples: int = 30,
             bootstrap_n: int = 2000, ci: float = 0.95) -> BiasReportModel:
        if not 0.0 < ci < 1.0:
            raise HTTPException(422, "ci must be in (0, 1)")
        report = detect_bias(
            store.snapshot(), provider, source_a, source_b,
            window=_window(window_start, window_end),
            params=BiasParams(rel_threshold=rel_threshold,
                              min_samples=min_samples,
                              bootstrap_n=bootstrap_n, ci=ci),
            echo_medians=_echo_medians(store),
        )
        return BiasReportModel(
            provider_id=report.provider_id,
            source_a=report.source_a, source_b=report.source_b,
            buckets=[BucketStatModel(size_bucket=b.size_bucket,
                                     median_bps_a=b.median_bps_a,
                                     median_bps_b=b.median_bps_b,
                                     n_a=b.n_a, n_b=b.n_b)
                     for b in report.buckets],
            median_diff_rel=report.median_diff_rel,
            ci_low=report.ci_low, ci_high=report.ci_high,
            n_a=report.n_a, n_b=report.n_b,
            flagged=report.flagged, status=report.status,
            latency_evidence=report.latency_evidence,
        )

    @app.get("/scatter")
    def scatter(provider: str | None = None, source: str | None = None,
                probe_kind: str | None = None,
                window_start: int | None = None, window_end: int | None = None,
                format: str = "json"):
        rows = export_scatter(
            store.snapshot(), provider_id=provider, source_label=source,
            probe_kinds={probe_kind} if probe_kind else None,
            window=_window(window_start, window_end),
        )
        if format == "csv":
            return PlainTextResponse(scatter_csv(rows), media_type="text/csv")
        return [
            ScatterRowModel(payload_bytes=r.payload_bytes,
                            effective_bps=r.effective_bps,
                            source_label=r.source_label,
                            probe_kind=r.probe_kind)
            for r in rows
        ]

    return app


def _echo_medians(store: RecordStore) -> dict[str, float] | None:
    """Median echo RTT per target host, as secondary latency evidence."""
    rtt = store.rtt_snapshot()
    if not rtt:
        return None
    import statistics

    by_target: dict[str, list[float]] = {}
    for record in rtt:
        by_target.setdefault(record.target, []).extend(record.rtts_ms)
    return {t: statistics.median(v) for t, v in by_target.items() if v}
